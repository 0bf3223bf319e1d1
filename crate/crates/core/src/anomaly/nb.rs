use serde::{Deserialize, Serialize};

use super::dataset::BinnedDataset;
use super::AnomalyError;

pub const LAPLACE_ALPHA: f64 = 1.0;

/// Categorical Naive Bayes over binned features with Laplace smoothing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NbModel {
    class_counts: [u64; 2],
    /// counts[feature][class][category]
    counts: Vec<[Vec<u64>; 2]>,
}

impl NbModel {
    pub fn arity(&self) -> usize {
        self.counts.len()
    }

    pub fn priors(&self) -> [f64; 2] {
        let n = (self.class_counts[0] + self.class_counts[1]) as f64;
        [self.class_counts[0] as f64 / n, self.class_counts[1] as f64 / n]
    }

    /// Predicted label and the normalized posterior `[P(0|x), P(1|x)]`.
    /// Categories never seen in training carry no evidence and are skipped.
    pub fn predict(&self, row: &[u32]) -> Result<(u8, [f64; 2]), AnomalyError> {
        if row.len() != self.arity() {
            return Err(AnomalyError::ArityMismatch {
                expected: self.arity(),
                got: row.len(),
            });
        }
        let priors = self.priors();
        let mut log = [priors[0].ln(), priors[1].ln()];
        for (j, &v) in row.iter().enumerate() {
            let per_class = &self.counts[j];
            let cardinality = per_class[0].len() as f64;
            let v = v as usize;
            let seen = per_class[0].get(v).copied().unwrap_or(0)
                + per_class[1].get(v).copied().unwrap_or(0);
            if seen == 0 {
                continue;
            }
            for c in 0..2 {
                let count = per_class[c][v] as f64;
                log[c] += ((count + LAPLACE_ALPHA)
                    / (self.class_counts[c] as f64 + LAPLACE_ALPHA * cardinality))
                    .ln();
            }
        }
        let m = log[0].max(log[1]);
        let e = [(log[0] - m).exp(), (log[1] - m).exp()];
        let z = e[0] + e[1];
        let post = [e[0] / z, e[1] / z];
        let label = u8::from(post[1] > post[0]);
        Ok((label, post))
    }
}

pub fn train_nb(data: &BinnedDataset) -> Result<NbModel, AnomalyError> {
    if data.is_empty() {
        return Err(AnomalyError::Empty);
    }
    if !data.has_both_classes() {
        return Err(AnomalyError::SingleClass);
    }
    let arity = data.arity();
    let mut cardinality = vec![0usize; arity];
    for row in &data.rows {
        for (j, &v) in row.iter().enumerate() {
            cardinality[j] = cardinality[j].max(v as usize + 1);
        }
    }
    let mut counts: Vec<[Vec<u64>; 2]> = cardinality
        .iter()
        .map(|&k| [vec![0; k], vec![0; k]])
        .collect();
    let mut class_counts = [0u64; 2];
    for (row, &l) in data.rows.iter().zip(&data.labels) {
        let c = usize::from(l);
        class_counts[c] += 1;
        for (j, &v) in row.iter().enumerate() {
            counts[j][c][v as usize] += 1;
        }
    }
    Ok(NbModel {
        class_counts,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(rows: Vec<Vec<u32>>, labels: Vec<u8>) -> BinnedDataset {
        BinnedDataset::from_rows(rows, labels).unwrap()
    }

    #[test]
    fn separable_single_feature() {
        let d = data(vec![vec![0], vec![0], vec![1], vec![1]], vec![0, 0, 1, 1]);
        let m = train_nb(&d).unwrap();
        for (row, &l) in d.rows.iter().zip(&d.labels) {
            assert_eq!(m.predict(row).unwrap().0, l);
        }
    }

    #[test]
    fn unseen_row_falls_back_to_priors() {
        // 3 benign, 1 attack
        let d = data(
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![2, 2]],
            vec![0, 0, 0, 1],
        );
        let m = train_nb(&d).unwrap();
        let (label, post) = m.predict(&[7, 9]).unwrap();
        // hand-computed: no evidence, so the posterior equals the priors 3/4, 1/4
        assert_eq!(label, 0);
        assert!((post[0] - 0.75).abs() < 1e-12);
        assert!((post[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn smoothed_posterior_matches_hand_computation() {
        let d = data(vec![vec![0], vec![1], vec![1]], vec![0, 0, 1]);
        let m = train_nb(&d).unwrap();
        // P(0)=2/3, P(x=1|0)=(1+1)/(2+2); P(1)=1/3, P(x=1|1)=(1+1)/(1+2)
        let a = 2.0 / 3.0 * 0.5;
        let b = 1.0 / 3.0 * (2.0 / 3.0);
        let (_, post) = m.predict(&[1]).unwrap();
        assert!((post[1] - b / (a + b)).abs() < 1e-12);
    }

    #[test]
    fn duplicating_the_training_set_keeps_predictions() {
        let rows = vec![vec![0, 1], vec![1, 1], vec![2, 0], vec![1, 0], vec![0, 0]];
        let labels = vec![0, 1, 1, 0, 1];
        let once = train_nb(&data(rows.clone(), labels.clone())).unwrap();
        let twice = train_nb(&data(
            [rows.clone(), rows].concat(),
            [labels.clone(), labels].concat(),
        ))
        .unwrap();
        for a in 0..3 {
            for b in 0..2 {
                assert_eq!(
                    once.predict(&[a, b]).unwrap().0,
                    twice.predict(&[a, b]).unwrap().0
                );
            }
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            train_nb(&data(vec![vec![0]], vec![1])),
            Err(AnomalyError::SingleClass)
        ));
        let m = train_nb(&data(vec![vec![0], vec![1]], vec![0, 1])).unwrap();
        assert!(matches!(m.predict(&[0, 0]), Err(AnomalyError::ArityMismatch { .. })));
    }
}
