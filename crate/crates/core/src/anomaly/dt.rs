use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dataset::BinnedDataset;
use super::AnomalyError;

/// Multiway decision tree over binned features, split by gain ratio.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum DtModel {
    Leaf {
        label: u8,
        counts: [u64; 2],
    },
    Split {
        feature: usize,
        children: BTreeMap<u32, DtModel>,
        /// Majority label at this node, used for unseen categories.
        fallback: u8,
    },
}

impl DtModel {
    pub fn predict(&self, row: &[u32]) -> u8 {
        match self {
            DtModel::Leaf { label, .. } => *label,
            DtModel::Split {
                feature,
                children,
                fallback,
            } => row
                .get(*feature)
                .and_then(|v| children.get(v))
                .map_or(*fallback, |c| c.predict(row)),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            DtModel::Leaf { .. } => 0,
            DtModel::Split { children, .. } => {
                1 + children.values().map(DtModel::depth).max().unwrap_or(0)
            }
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            DtModel::Leaf { .. } => 1,
            DtModel::Split { children, .. } => children.values().map(DtModel::leaves).sum(),
        }
    }
}

/// `max_depth = None` grows until every leaf is pure or its rows are
/// indistinguishable.
pub fn train_dt(data: &BinnedDataset, max_depth: Option<usize>) -> Result<DtModel, AnomalyError> {
    if data.is_empty() {
        return Err(AnomalyError::Empty);
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    Ok(grow(data, &idx, 0, max_depth))
}

fn class_counts(data: &BinnedDataset, idx: &[usize]) -> [u64; 2] {
    let mut c = [0u64; 2];
    for &i in idx {
        c[usize::from(data.labels[i])] += 1;
    }
    c
}

fn majority(c: [u64; 2]) -> u8 {
    u8::from(c[1] > c[0])
}

fn entropy(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum()
}

fn partition(data: &BinnedDataset, idx: &[usize], feature: usize) -> BTreeMap<u32, Vec<usize>> {
    let mut parts: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for &i in idx {
        parts.entry(data.rows[i][feature]).or_default().push(i);
    }
    parts
}

fn grow(data: &BinnedDataset, idx: &[usize], depth: usize, max_depth: Option<usize>) -> DtModel {
    let counts = class_counts(data, idx);
    let label = majority(counts);
    let pure = counts[0] == 0 || counts[1] == 0;
    if pure || max_depth.is_some_and(|d| depth >= d) {
        return DtModel::Leaf { label, counts };
    }

    let base = entropy(&counts);
    let n = idx.len() as f64;
    // (gain ratio, gain); zero-gain splits are still taken when nothing
    // better exists, which is what lets XOR-like data be separated
    let mut best: Option<(usize, f64, f64, BTreeMap<u32, Vec<usize>>)> = None;
    for j in 0..data.arity() {
        let parts = partition(data, idx, j);
        if parts.len() < 2 {
            continue;
        }
        let mut cond = 0.0;
        let mut split_info = 0.0;
        for p in parts.values() {
            let w = p.len() as f64 / n;
            cond += w * entropy(&class_counts(data, p));
            split_info -= w * w.log2();
        }
        let gain = (base - cond).max(0.0);
        let ratio = if split_info > 0.0 { gain / split_info } else { 0.0 };
        let better = match &best {
            None => true,
            Some((_, r, g, _)) => ratio > *r + 1e-12 || ((ratio - *r).abs() <= 1e-12 && gain > *g + 1e-12),
        };
        if better {
            best = Some((j, ratio, gain, parts));
        }
    }
    let Some((feature, _, _, parts)) = best else {
        return DtModel::Leaf { label, counts };
    };
    let children = parts
        .into_iter()
        .map(|(v, sub)| (v, grow(data, &sub, depth + 1, max_depth)))
        .collect();
    DtModel::Split {
        feature,
        children,
        fallback: label,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(rows: Vec<Vec<u32>>, labels: Vec<u8>) -> BinnedDataset {
        BinnedDataset::from_rows(rows, labels).unwrap()
    }

    fn accuracy(m: &DtModel, d: &BinnedDataset) -> f64 {
        let ok = d
            .rows
            .iter()
            .zip(&d.labels)
            .filter(|(r, &l)| m.predict(r) == l)
            .count();
        ok as f64 / d.len() as f64
    }

    #[test]
    fn one_feature_separable_gives_depth_one() {
        let d = data(
            vec![vec![0, 3], vec![0, 1], vec![1, 3], vec![1, 2]],
            vec![0, 0, 1, 1],
        );
        let m = train_dt(&d, None).unwrap();
        assert_eq!(m.depth(), 1);
        assert_eq!(accuracy(&m, &d), 1.0);
    }

    #[test]
    fn pure_data_is_one_leaf() {
        let d = data(vec![vec![0], vec![1], vec![2]], vec![1, 1, 1]);
        let m = train_dt(&d, None).unwrap();
        assert_eq!(m, DtModel::Leaf { label: 1, counts: [0, 3] });
    }

    #[test]
    fn xor_needs_depth_two() {
        // exhaustive truth table of a XOR b
        let rows: Vec<Vec<u32>> = (0..4).map(|i| vec![i & 1, i >> 1]).collect();
        let labels: Vec<u8> = rows.iter().map(|r| (r[0] ^ r[1]) as u8).collect();
        let d = data(rows, labels);
        assert_eq!(accuracy(&train_dt(&d, Some(2)).unwrap(), &d), 1.0);
        assert!(accuracy(&train_dt(&d, Some(1)).unwrap(), &d) < 1.0);
    }

    #[test]
    fn depth_cap_and_unseen_categories() {
        let d = data(vec![vec![0], vec![1], vec![2]], vec![0, 1, 1]);
        let m = train_dt(&d, Some(0)).unwrap();
        assert_eq!(m.depth(), 0);
        let m = train_dt(&d, None).unwrap();
        assert_eq!(m.predict(&[9]), 1);
        assert!(train_dt(&data(vec![], vec![]), None).is_err());
    }
}
