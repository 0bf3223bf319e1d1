use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::chi::chi_square_score;
use super::dataset::BinnedDataset;
use super::nb::train_nb;
use super::AnomalyError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", content = "k", rename_all = "snake_case")]
pub enum Selector {
    ChiSquare(usize),
    /// Chi-square candidates re-ranked by a backward-elimination wrapper.
    Ensemble(usize),
}

impl Selector {
    pub fn k(&self) -> usize {
        match self {
            Selector::ChiSquare(k) | Selector::Ensemble(k) => *k,
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::ChiSquare(k) => write!(f, "chi:{k}"),
            Selector::Ensemble(k) => write!(f, "ensemble:{k}"),
        }
    }
}

/// Parses `chi:K` or `ensemble:K`.
impl FromStr for Selector {
    type Err = AnomalyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AnomalyError::UnknownSelector(s.to_string());
        let (name, k) = s.split_once(':').ok_or_else(bad)?;
        let k: usize = k.trim().parse().map_err(|_| bad())?;
        match name.trim().to_ascii_lowercase().as_str() {
            "chi" | "chi2" | "chisquare" => Ok(Selector::ChiSquare(k)),
            "ensemble" | "rfe" => Ok(Selector::Ensemble(k)),
            _ => Err(bad()),
        }
    }
}

/// Chi-square score of every feature, in feature order.
pub fn chi_scores(data: &BinnedDataset) -> Result<Vec<f64>, AnomalyError> {
    (0..data.arity())
        .map(|j| chi_square_score(&data.column(j), &data.labels))
        .collect()
}

/// Indices ordered best first: score descending, ties by lower index.
fn rank_by_score(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Returns the chosen feature indices in ascending order.
pub fn select_features(data: &BinnedDataset, selector: Selector) -> Result<Vec<usize>, AnomalyError> {
    let k = selector.k();
    let arity = data.arity();
    if k == 0 || k > arity {
        return Err(AnomalyError::KOutOfRange { k, arity });
    }
    let ranked = rank_by_score(&chi_scores(data)?);
    let mut chosen = match selector {
        Selector::ChiSquare(_) => ranked[..k].to_vec(),
        Selector::Ensemble(_) => {
            let candidates = &ranked[..(2 * k).min(arity)];
            ensemble(data, candidates, k)?
        }
    };
    chosen.sort_unstable();
    Ok(chosen)
}

fn ensemble(data: &BinnedDataset, candidates: &[usize], k: usize) -> Result<Vec<usize>, AnomalyError> {
    let elim = elimination_order(data, candidates)?;
    // chi rank is the position in `candidates`; elimination rank counts from
    // the last survivor (0) upward
    let mut summed: Vec<(usize, usize)> = candidates
        .iter()
        .enumerate()
        .map(|(chi_rank, &f)| {
            let pos = elim.iter().position(|&e| e == f).expect("candidate ranked");
            (chi_rank + (elim.len() - 1 - pos), f)
        })
        .collect();
    summed.sort_unstable();
    Ok(summed.into_iter().take(k).map(|(_, f)| f).collect())
}

/// Backward elimination: repeatedly drop the feature whose removal leaves the
/// best held-out NB accuracy. Returns features in the order they were dropped,
/// with the last survivor at the end.
pub fn elimination_order(data: &BinnedDataset, features: &[usize]) -> Result<Vec<usize>, AnomalyError> {
    let (train, test) = holdout(data);
    let mut alive: Vec<usize> = features.to_vec();
    let mut dropped = Vec::with_capacity(features.len());
    while alive.len() > 1 {
        let mut best: Option<(f64, usize)> = None;
        for (pos, &f) in alive.iter().enumerate() {
            let rest: Vec<usize> = alive.iter().copied().filter(|&g| g != f).collect();
            let acc = holdout_accuracy(&train, &test, &rest)?;
            // ties drop the higher index so lower indices survive longer
            if best.map_or(true, |(a, p)| acc > a || (acc == a && f > alive[p])) {
                best = Some((acc, pos));
            }
        }
        let (_, pos) = best.expect("non-empty");
        dropped.push(alive.remove(pos));
    }
    dropped.extend(alive);
    Ok(dropped)
}

/// Deterministic 70/30 split by row position.
fn holdout(data: &BinnedDataset) -> (BinnedDataset, BinnedDataset) {
    let (tr, te): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|i| i % 10 < 7);
    let (tr, te) = (data.subset(&tr), data.subset(&te));
    if tr.has_both_classes() && !te.is_empty() {
        (tr, te)
    } else {
        (data.clone(), data.clone())
    }
}

fn holdout_accuracy(train: &BinnedDataset, test: &BinnedDataset, features: &[usize]) -> Result<f64, AnomalyError> {
    let model = train_nb(&train.project(features))?;
    let test = test.project(features);
    let mut ok = 0usize;
    for (row, &l) in test.rows.iter().zip(&test.labels) {
        if model.predict(row)?.0 == l {
            ok += 1;
        }
    }
    Ok(ok as f64 / test.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// feature 1 separates, 0 and 2 are noise
    fn one_signal() -> BinnedDataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40u32 {
            let l = (i % 2) as u8;
            rows.push(vec![i % 3, u32::from(l) * 4, (i / 2) % 2]);
            labels.push(l);
        }
        BinnedDataset::from_rows(rows, labels).unwrap()
    }

    #[test]
    fn parse_selectors() {
        assert_eq!("chi:5".parse::<Selector>().unwrap(), Selector::ChiSquare(5));
        assert_eq!("ensemble:2".parse::<Selector>().unwrap(), Selector::Ensemble(2));
        assert!("pca:2".parse::<Selector>().is_err());
        assert!("chi".parse::<Selector>().is_err());
        assert_eq!(Selector::Ensemble(3).to_string(), "ensemble:3");
    }

    #[test]
    fn k_equal_to_arity_keeps_everything() {
        let d = one_signal();
        assert_eq!(select_features(&d, Selector::ChiSquare(3)).unwrap(), vec![0, 1, 2]);
        assert_eq!(select_features(&d, Selector::Ensemble(3)).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn separating_feature_wins() {
        let d = one_signal();
        // brute force: the best score by direct comparison
        let scores = chi_scores(&d).unwrap();
        let best = (0..3).max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a))).unwrap();
        assert_eq!(best, 1);
        assert_eq!(select_features(&d, Selector::ChiSquare(1)).unwrap(), vec![best]);
        assert_eq!(select_features(&d, Selector::Ensemble(1)).unwrap(), vec![best]);
    }

    #[test]
    fn k_out_of_range() {
        let d = one_signal();
        for s in [Selector::ChiSquare(0), Selector::ChiSquare(4), Selector::Ensemble(0)] {
            assert!(matches!(select_features(&d, s), Err(AnomalyError::KOutOfRange { .. })));
        }
    }

    #[test]
    fn ties_break_by_lower_index() {
        let rows: Vec<Vec<u32>> = (0..8u32).map(|i| vec![i % 2, i % 2, 0]).collect();
        let labels: Vec<u8> = (0..8u32).map(|i| (i % 2) as u8).collect();
        let d = BinnedDataset::from_rows(rows, labels).unwrap();
        assert_eq!(select_features(&d, Selector::ChiSquare(1)).unwrap(), vec![0]);
        assert_eq!(select_features(&d, Selector::Ensemble(1)).unwrap(), vec![0]);
    }
}
