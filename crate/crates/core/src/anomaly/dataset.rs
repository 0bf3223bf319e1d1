use std::io::Read;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AnomalyError;

pub const LABEL_COLUMN: &str = "label";
pub const DEFAULT_BINS: usize = 10;

/// Raw numeric feature vectors with binary labels (1 = attack).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self, AnomalyError> {
        if rows.len() != labels.len() {
            return Err(AnomalyError::LengthMismatch {
                left: rows.len(),
                right: labels.len(),
            });
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != feature_names.len()) {
            return Err(AnomalyError::ArityMismatch {
                expected: feature_names.len(),
                got: bad.len(),
            });
        }
        if let Some(&l) = labels.iter().find(|&&l| l > 1) {
            return Err(AnomalyError::BadLabel(l as i64));
        }
        Ok(Dataset {
            feature_names,
            rows,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.feature_names.len()
    }

    /// Reads CSV with a header row; the `label` column holds 0/1.
    pub fn from_csv<R: Read>(input: R) -> Result<Self, AnomalyError> {
        let mut reader = csv::Reader::from_reader(input);
        let headers = reader.headers().map_err(csv_err)?.clone();
        let label_at = headers
            .iter()
            .position(|h| h.trim() == LABEL_COLUMN)
            .ok_or_else(|| AnomalyError::Csv("missing label column".into()))?;
        let feature_names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != label_at)
            .map(|(_, h)| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(csv_err)?;
            let mut row = Vec::with_capacity(feature_names.len());
            for (i, field) in record.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    AnomalyError::Csv(format!("row {}: {:?} is not numeric", line + 2, field))
                })?;
                if i == label_at {
                    if v != 0.0 && v != 1.0 {
                        return Err(AnomalyError::BadLabel(v as i64));
                    }
                    labels.push(v as u8);
                } else {
                    row.push(v);
                }
            }
            rows.push(row);
        }
        Dataset::new(feature_names, rows, labels)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = self.feature_names.clone();
        header.push(LABEL_COLUMN.to_string());
        w.write_record(&header).expect("in-memory csv");
        for (row, label) in self.rows.iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(label.to_string());
            w.write_record(&rec).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }

    /// Seeded shuffle, then the first `train_fraction` of rows train.
    pub fn split(&self, train_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = ((self.len() as f64) * train_fraction).round() as usize;
        let pick = |ids: &[usize]| Dataset {
            feature_names: self.feature_names.clone(),
            rows: ids.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: ids.iter().map(|&i| self.labels[i]).collect(),
        };
        (pick(&idx[..cut]), pick(&idx[cut..]))
    }
}

fn csv_err(e: csv::Error) -> AnomalyError {
    AnomalyError::Csv(e.to_string())
}

/// Equal-frequency binning fitted per feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Binner {
    /// Ascending cut points per feature; bin = number of cuts <= value.
    cuts: Vec<Vec<f64>>,
}

impl Binner {
    pub fn fit(data: &Dataset, bins: usize) -> Result<Self, AnomalyError> {
        if data.is_empty() {
            return Err(AnomalyError::Empty);
        }
        let bins = bins.max(1);
        let n = data.len();
        let cuts = (0..data.arity())
            .map(|j| {
                let mut col: Vec<f64> = data.rows.iter().map(|r| r[j]).collect();
                col.sort_by(f64::total_cmp);
                let mut c: Vec<f64> = (1..bins).map(|i| col[i * n / bins]).collect();
                c.dedup();
                // a cut at the column minimum would leave bin 0 empty
                c.retain(|&x| x > col[0]);
                c
            })
            .collect();
        Ok(Binner { cuts })
    }

    pub fn arity(&self) -> usize {
        self.cuts.len()
    }

    pub fn bin_value(&self, feature: usize, v: f64) -> u32 {
        self.cuts[feature].partition_point(|&c| c <= v) as u32
    }

    pub fn bin_row(&self, row: &[f64]) -> Result<Vec<u32>, AnomalyError> {
        if row.len() != self.arity() {
            return Err(AnomalyError::ArityMismatch {
                expected: self.arity(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, &v)| self.bin_value(j, v))
            .collect())
    }

    pub fn transform(&self, data: &Dataset) -> Result<BinnedDataset, AnomalyError> {
        let rows = data
            .rows
            .iter()
            .map(|r| self.bin_row(r))
            .collect::<Result<Vec<_>, _>>()?;
        BinnedDataset::new(data.feature_names.clone(), rows, data.labels.clone())
    }
}

/// Categorical feature vectors, as consumed by chi-square, NB and DT.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinnedDataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<u32>>,
    pub labels: Vec<u8>,
}

impl BinnedDataset {
    pub fn new(feature_names: Vec<String>, rows: Vec<Vec<u32>>, labels: Vec<u8>) -> Result<Self, AnomalyError> {
        if rows.len() != labels.len() {
            return Err(AnomalyError::LengthMismatch {
                left: rows.len(),
                right: labels.len(),
            });
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != feature_names.len()) {
            return Err(AnomalyError::ArityMismatch {
                expected: feature_names.len(),
                got: bad.len(),
            });
        }
        if let Some(&l) = labels.iter().find(|&&l| l > 1) {
            return Err(AnomalyError::BadLabel(l as i64));
        }
        Ok(BinnedDataset {
            feature_names,
            rows,
            labels,
        })
    }

    /// Builds a dataset with generated feature names `f0..`.
    pub fn from_rows(rows: Vec<Vec<u32>>, labels: Vec<u8>) -> Result<Self, AnomalyError> {
        let arity = rows.first().map_or(0, Vec::len);
        BinnedDataset::new((0..arity).map(|i| format!("f{i}")).collect(), rows, labels)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.feature_names.len()
    }

    pub fn column(&self, j: usize) -> Vec<u32> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn has_both_classes(&self) -> bool {
        self.labels.contains(&0) && self.labels.contains(&1)
    }

    /// Keeps only the given feature columns, in the given order.
    pub fn project(&self, features: &[usize]) -> BinnedDataset {
        BinnedDataset {
            feature_names: features.iter().map(|&j| self.feature_names[j].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| features.iter().map(|&j| r[j]).collect())
                .collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn subset(&self, idx: &[usize]) -> BinnedDataset {
        BinnedDataset {
            feature_names: self.feature_names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let d = Dataset::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.5, 2.0], vec![3.0, -1.0]],
            vec![0, 1],
        )
        .unwrap();
        let back = Dataset::from_csv(d.to_csv().as_bytes()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn csv_errors() {
        assert!(Dataset::from_csv("a,b\n1,2\n".as_bytes()).is_err());
        assert!(Dataset::from_csv("a,label\n1,2\n".as_bytes()).is_err());
        assert!(Dataset::from_csv("a,label\nx,1\n".as_bytes()).is_err());
    }

    #[test]
    fn equal_frequency_bins() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let d = Dataset::new(vec!["x".into()], rows, vec![0; 100]).unwrap();
        let b = Binner::fit(&d, 10).unwrap();
        let binned = b.transform(&d).unwrap();
        for bin in 0..10u32 {
            assert_eq!(binned.rows.iter().filter(|r| r[0] == bin).count(), 10);
        }
        let constant = Dataset::new(vec!["x".into()], vec![vec![3.0]; 10], vec![0; 10]).unwrap();
        let b = Binner::fit(&constant, 10).unwrap();
        assert_eq!(b.bin_value(0, 3.0), 0);
    }

    #[test]
    fn split_is_seeded() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let d = Dataset::new(vec!["x".into()], rows, vec![0; 10]).unwrap();
        let (a, b) = d.split(0.7, 3);
        assert_eq!((a.len(), b.len()), (7, 3));
        assert_eq!(d.split(0.7, 3).0, a);
    }
}
