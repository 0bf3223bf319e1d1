use serde::{Deserialize, Serialize};

use super::AnomalyError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub r#fn: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.r#fn
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.r#fn
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// Rates are percentages. A rate whose denominator class is absent from the
/// test set is `None`, as is the AUC.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub fnr: Option<f64>,
    pub fpr: Option<f64>,
    pub roc: Vec<RocPoint>,
    pub auc: Option<f64>,
    pub confusion: Confusion,
}

impl EvalMetrics {
    pub fn roc_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for p in &self.roc {
            out.push_str(&format!("{},{}\n", p.fpr, p.tpr));
        }
        out
    }

    pub fn row(&self) -> MetricRow {
        MetricRow {
            accuracy: self.accuracy,
            tpr: self.tpr,
            tnr: self.tnr,
            fnr: self.fnr,
            fpr: self.fpr,
        }
    }
}

/// A row of rates as published in a results table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub accuracy: f64,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub fnr: Option<f64>,
    pub fpr: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    /// |tpr + fnr - 100|
    pub positive_residual: Option<f64>,
    /// |tnr + fpr - 100|
    pub negative_residual: Option<f64>,
}

impl IdentityCheck {
    pub fn holds(&self, eps: f64) -> bool {
        [self.positive_residual, self.negative_residual]
            .into_iter()
            .flatten()
            .all(|r| r <= eps)
    }
}

impl MetricRow {
    pub fn new(accuracy: f64, tpr: f64, tnr: f64, fnr: f64, fpr: f64) -> Self {
        MetricRow {
            accuracy,
            tpr: Some(tpr),
            tnr: Some(tnr),
            fnr: Some(fnr),
            fpr: Some(fpr),
        }
    }

    pub fn identities(&self) -> IdentityCheck {
        let res = |a: Option<f64>, b: Option<f64>| Some((a? + b? - 100.0).abs());
        IdentityCheck {
            positive_residual: res(self.tpr, self.fnr),
            negative_residual: res(self.tnr, self.fpr),
        }
    }
}

fn pct(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// Scores are the attack probability (or the hard label when a classifier
/// exposes nothing finer). `predicted` holds the hard labels.
pub fn evaluate_predictions(labels: &[u8], predicted: &[u8], scores: &[f64]) -> Result<EvalMetrics, AnomalyError> {
    if labels.is_empty() {
        return Err(AnomalyError::Empty);
    }
    for other in [predicted.len(), scores.len()] {
        if other != labels.len() {
            return Err(AnomalyError::LengthMismatch {
                left: labels.len(),
                right: other,
            });
        }
    }
    let mut c = Confusion::default();
    for (&l, &p) in labels.iter().zip(predicted) {
        match (l, p) {
            (1, 1) => c.tp += 1,
            (1, _) => c.r#fn += 1,
            (_, 1) => c.fp += 1,
            _ => c.tn += 1,
        }
    }
    let (pos, neg) = (c.positives(), c.negatives());
    let roc = roc_curve(labels, scores);
    let auc = (pos > 0 && neg > 0).then(|| trapezoid(&roc));
    Ok(EvalMetrics {
        accuracy: 100.0 * (c.tp + c.tn) as f64 / c.total() as f64,
        tpr: pct(c.tp, pos),
        tnr: pct(c.tn, neg),
        fnr: pct(c.r#fn, pos),
        fpr: pct(c.fp, neg),
        roc,
        auc,
        confusion: c,
    })
}

/// Evaluates `predict` over every row. It returns the hard label and the
/// attack score.
pub fn evaluate<R, F>(rows: &[R], labels: &[u8], mut predict: F) -> Result<EvalMetrics, AnomalyError>
where
    F: FnMut(&R) -> Result<(u8, f64), AnomalyError>,
{
    if rows.len() != labels.len() {
        return Err(AnomalyError::LengthMismatch {
            left: rows.len(),
            right: labels.len(),
        });
    }
    let mut predicted = Vec::with_capacity(rows.len());
    let mut scores = Vec::with_capacity(rows.len());
    for r in rows {
        let (l, s) = predict(r)?;
        predicted.push(l);
        scores.push(s);
    }
    evaluate_predictions(labels, &predicted, &scores)
}

/// Threshold sweep from the highest score down. Rows with equal scores enter
/// together, so ties produce a diagonal segment.
pub fn roc_curve(labels: &[u8], scores: &[f64]) -> Vec<RocPoint> {
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let rate = |n: f64, d: f64| if d > 0.0 { n / d } else { 0.0 };
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: rate(fp, neg),
            tpr: rate(tp, pos),
        });
    }
    points
}

pub fn trapezoid(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LABELS: [u8; 6] = [0, 0, 0, 1, 1, 1];

    #[test]
    fn perfect_classifier() {
        let m = evaluate_predictions(&LABELS, &LABELS, &[0.1, 0.2, 0.3, 0.7, 0.8, 0.9]).unwrap();
        assert_eq!(m.accuracy, 100.0);
        assert_eq!(m.tpr, Some(100.0));
        assert_eq!(m.fpr, Some(0.0));
        assert_eq!(m.auc, Some(1.0));
    }

    #[test]
    fn inverted_classifier() {
        let inv: Vec<u8> = LABELS.iter().map(|l| 1 - l).collect();
        let scores: Vec<f64> = inv.iter().map(|&l| f64::from(l)).collect();
        let m = evaluate_predictions(&LABELS, &inv, &scores).unwrap();
        assert_eq!(m.accuracy, 0.0);
        assert_eq!(m.auc, Some(0.0));
    }

    #[test]
    fn single_class_rates_are_null() {
        let m = evaluate_predictions(&[1, 1], &[1, 0], &[1.0, 0.0]).unwrap();
        assert_eq!(m.tpr, Some(50.0));
        assert_eq!(m.tnr, None);
        assert_eq!(m.fpr, None);
        assert_eq!(m.auc, None);
        let json = serde_json::to_value(&m).unwrap();
        assert!(json["fpr"].is_null());
    }

    #[test]
    fn hand_computed_confusion() {
        // tp=2 fn=1 tn=2 fp=1
        let m = evaluate_predictions(&LABELS, &[0, 0, 1, 1, 1, 0], &[0.0, 0.0, 1.0, 1.0, 1.0, 0.0]).unwrap();
        let third = 100.0 / 3.0;
        assert!((m.tpr.unwrap() - 2.0 * third).abs() < 1e-9);
        assert!((m.fnr.unwrap() - third).abs() < 1e-9);
        assert!(m.row().identities().holds(1e-9));
        // one threshold step: (1/3, 2/3) then (1, 1)
        let auc = 0.5 * (1.0 / 3.0) * (2.0 / 3.0) + (2.0 / 3.0) * (2.0 / 3.0 + 1.0) / 2.0;
        assert!((m.auc.unwrap() - auc).abs() < 1e-12);
    }

    #[test]
    fn published_row_convention() {
        let rf = MetricRow::new(98.888, 99.182, 98.482, 0.8176, 1.517);
        let id = rf.identities();
        assert!(id.holds(0.01));
        assert!((id.positive_residual.unwrap() - 0.0004).abs() < 1e-9);
    }

    #[test]
    fn roc_is_monotone() {
        let scores = [0.5, 0.1, 0.5, 0.9, 0.2, 0.5];
        let roc = roc_curve(&LABELS, &scores);
        for w in roc.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
        assert_eq!(roc.last(), Some(&RocPoint { fpr: 1.0, tpr: 1.0 }));
    }

    #[test]
    fn csv_and_errors() {
        let m = evaluate_predictions(&[0, 1], &[0, 1], &[0.0, 1.0]).unwrap();
        assert!(m.roc_csv().starts_with("fpr,tpr\n0,0\n"));
        assert!(evaluate_predictions(&[], &[], &[]).is_err());
        assert!(evaluate_predictions(&[0], &[0, 1], &[0.0]).is_err());
    }
}
