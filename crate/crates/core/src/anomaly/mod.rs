//! Classifiers behind the flow validator's anomaly detector.

mod chi;
mod dataset;
mod dt;
mod metrics;
mod nb;
mod select;
mod synthetic;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use chi::chi_square_score;
pub use dataset::{BinnedDataset, Binner, Dataset, DEFAULT_BINS, LABEL_COLUMN};
pub use dt::{train_dt, DtModel};
pub use metrics::{
    evaluate, evaluate_predictions, roc_curve, trapezoid, Confusion, EvalMetrics, IdentityCheck,
    MetricRow, RocPoint,
};
pub use nb::{train_nb, NbModel, LAPLACE_ALPHA};
pub use select::{chi_scores, elimination_order, select_features, Selector};
pub use synthetic::{synthetic_flows, SYNTHETIC_FEATURES};

use crate::secfn::{FlowFeatures, FlowScorer};

#[derive(Debug, thiserror::Error)]
pub enum AnomalyError {
    #[error("dataset is empty")]
    Empty,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("expected {expected} features, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("label {0} is not 0 or 1")]
    BadLabel(i64),
    #[error("csv: {0}")]
    Csv(String),
    #[error("k = {k} outside 1..={arity}")]
    KOutOfRange { k: usize, arity: usize },
    #[error("training set needs both classes")]
    SingleClass,
    #[error("unknown classifier {0:?}")]
    UnknownClassifier(String),
    #[error("unknown selector {0:?}")]
    UnknownSelector(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classifier {
    Nb,
    Dt { max_depth: Option<usize> },
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Classifier::Nb => f.write_str("nb"),
            Classifier::Dt { max_depth: None } => f.write_str("dt"),
            Classifier::Dt { max_depth: Some(d) } => write!(f, "dt:{d}"),
        }
    }
}

/// `nb`, `dt` or `dt:DEPTH`.
impl FromStr for Classifier {
    type Err = AnomalyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AnomalyError::UnknownClassifier(s.to_string());
        let lower = s.trim().to_ascii_lowercase();
        let (name, depth) = match lower.split_once(':') {
            Some((n, d)) => (n, Some(d.parse::<usize>().map_err(|_| bad())?)),
            None => (lower.as_str(), None),
        };
        match (name, depth) {
            ("nb", None) => Ok(Classifier::Nb),
            ("dt", d) => Ok(Classifier::Dt { max_depth: d }),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    Nb(NbModel),
    Dt(DtModel),
}

impl Model {
    pub fn train(classifier: Classifier, data: &BinnedDataset) -> Result<Self, AnomalyError> {
        match classifier {
            Classifier::Nb => train_nb(data).map(Model::Nb),
            Classifier::Dt { max_depth } => train_dt(data, max_depth).map(Model::Dt),
        }
    }

    /// Hard label and attack score.
    pub fn predict(&self, row: &[u32]) -> Result<(u8, f64), AnomalyError> {
        match self {
            Model::Nb(m) => m.predict(row).map(|(l, p)| (l, p[1])),
            Model::Dt(m) => {
                let l = m.predict(row);
                Ok((l, f64::from(l)))
            }
        }
    }

    pub fn accuracy(&self, data: &BinnedDataset) -> Result<f64, AnomalyError> {
        let m = evaluate(&data.rows, &data.labels, |r| self.predict(r))?;
        Ok(m.accuracy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub classifier: Classifier,
    pub selector: Selector,
    pub train_fraction: f64,
    pub bins: usize,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(classifier: Classifier, selector: Selector, seed: u64) -> Self {
        PipelineConfig {
            classifier,
            selector,
            train_fraction: 0.7,
            bins: DEFAULT_BINS,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub classifier: String,
    pub selector: String,
    pub selected_features: Vec<String>,
    pub train_rows: usize,
    pub test_rows: usize,
    pub train_accuracy: f64,
    pub metrics: EvalMetrics,
}

/// Split, bin on the training part, select, train, evaluate on the rest.
pub fn run_pipeline(data: &Dataset, cfg: &PipelineConfig) -> Result<PipelineReport, AnomalyError> {
    let (train, test) = data.split(cfg.train_fraction, cfg.seed);
    if train.is_empty() || test.is_empty() {
        return Err(AnomalyError::Empty);
    }
    let binner = Binner::fit(&train, cfg.bins)?;
    let train_b = binner.transform(&train)?;
    let test_b = binner.transform(&test)?;
    let selected = select_features(&train_b, cfg.selector)?;
    let train_b = train_b.project(&selected);
    let test_b = test_b.project(&selected);
    let model = Model::train(cfg.classifier, &train_b)?;
    let metrics = evaluate(&test_b.rows, &test_b.labels, |r| model.predict(r))?;
    Ok(PipelineReport {
        classifier: cfg.classifier.to_string(),
        selector: cfg.selector.to_string(),
        selected_features: selected
            .iter()
            .map(|&j| data.feature_names[j].clone())
            .collect(),
        train_rows: train.len(),
        test_rows: test.len(),
        train_accuracy: model.accuracy(&train_b)?,
        metrics,
    })
}

/// NB model over the four per-flow features, usable as the flow validator's
/// classifier.
#[derive(Clone, Debug)]
pub struct NbFlowScorer {
    binner: Binner,
    model: NbModel,
    threshold: f64,
}

impl NbFlowScorer {
    /// Trains on the first four columns of `data`.
    pub fn train(data: &Dataset, threshold: f64) -> Result<Self, AnomalyError> {
        if data.arity() < 4 {
            return Err(AnomalyError::ArityMismatch {
                expected: 4,
                got: data.arity(),
            });
        }
        let flow = Dataset::new(
            data.feature_names[..4].to_vec(),
            data.rows.iter().map(|r| r[..4].to_vec()).collect(),
            data.labels.clone(),
        )?;
        let binner = Binner::fit(&flow, DEFAULT_BINS)?;
        let model = train_nb(&binner.transform(&flow)?)?;
        Ok(NbFlowScorer {
            binner,
            model,
            threshold,
        })
    }
}

impl FlowScorer for NbFlowScorer {
    fn attack_probability(&self, features: &FlowFeatures) -> f64 {
        let row = self.binner.bin_row(&features.as_row()).expect("four features");
        self.model.predict(&row).map(|(_, p)| p[1]).unwrap_or(0.0)
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_classifiers() {
        assert_eq!("nb".parse::<Classifier>().unwrap(), Classifier::Nb);
        assert_eq!("DT".parse::<Classifier>().unwrap(), Classifier::Dt { max_depth: None });
        assert_eq!("dt:3".parse::<Classifier>().unwrap(), Classifier::Dt { max_depth: Some(3) });
        assert!(matches!(
            "unknownX".parse::<Classifier>(),
            Err(AnomalyError::UnknownClassifier(_))
        ));
        assert!("nb:2".parse::<Classifier>().is_err());
    }

    #[test]
    fn synthetic_pipeline_nb() {
        let data = synthetic_flows(1000, 42);
        let cfg = PipelineConfig::new(Classifier::Nb, Selector::ChiSquare(5), 42);
        let r = run_pipeline(&data, &cfg).unwrap();
        assert_eq!(r.selected_features.len(), 5);
        assert!(r.metrics.accuracy >= 95.0, "{}", r.metrics.accuracy);
        assert!(r.metrics.row().identities().holds(1e-6));
        assert_eq!(r.train_rows + r.test_rows, 1000);
    }

    #[test]
    fn synthetic_pipeline_dt_ensemble() {
        let data = synthetic_flows(600, 3);
        let cfg = PipelineConfig::new(Classifier::Dt { max_depth: None }, Selector::Ensemble(2), 3);
        let r = run_pipeline(&data, &cfg).unwrap();
        let nb = run_pipeline(&data, &PipelineConfig { classifier: Classifier::Nb, ..cfg }).unwrap();
        assert!(r.train_accuracy >= nb.train_accuracy);
        assert!(r.metrics.accuracy >= 95.0);
        assert!(!r.selected_features.iter().any(|f| f == "ttl_mean" || f == "window_size"));
    }

    #[test]
    fn dt_memorizes_balanced_binned_flows() {
        let data = synthetic_flows(500, 11);
        let binned = Binner::fit(&data, DEFAULT_BINS).unwrap().transform(&data).unwrap();
        let model = Model::train(Classifier::Dt { max_depth: None }, &binned).unwrap();
        assert_eq!(model.accuracy(&binned).unwrap(), 100.0);
    }

    #[test]
    fn flow_scorer_flags_floods() {
        let s = NbFlowScorer::train(&synthetic_flows(500, 9), 0.5).unwrap();
        let flood = FlowFeatures {
            packet_rate: 1500.0,
            byte_rate: 1500.0 * 60.0,
            payload_entropy: 0.2,
            duration_s: 2.0,
        };
        let normal = FlowFeatures {
            packet_rate: 10.0,
            byte_rate: 10.0 * 800.0,
            payload_entropy: 1.8,
            duration_s: 60.0,
        };
        assert!(s.attack_probability(&flood) > 0.5);
        assert!(s.attack_probability(&normal) < 0.5);
    }
}
