use std::collections::BTreeMap;

use super::AnomalyError;

/// Pearson chi-square statistic of the category x label contingency table.
/// Rows or columns with a zero marginal contribute nothing, so a constant
/// feature or a single-class column scores 0.
pub fn chi_square_score(column: &[u32], labels: &[u8]) -> Result<f64, AnomalyError> {
    if column.is_empty() {
        return Err(AnomalyError::Empty);
    }
    if column.len() != labels.len() {
        return Err(AnomalyError::LengthMismatch {
            left: column.len(),
            right: labels.len(),
        });
    }
    let mut table: BTreeMap<u32, [u64; 2]> = BTreeMap::new();
    let mut class_totals = [0u64; 2];
    for (&v, &l) in column.iter().zip(labels) {
        let l = usize::from(l.min(1));
        table.entry(v).or_default()[l] += 1;
        class_totals[l] += 1;
    }
    let n = column.len() as f64;
    let mut chi = 0.0;
    for counts in table.values() {
        let row_total = (counts[0] + counts[1]) as f64;
        for c in 0..2 {
            let expected = row_total * class_totals[c] as f64 / n;
            if expected > 0.0 {
                let d = counts[c] as f64 - expected;
                chi += d * d / expected;
            }
        }
    }
    Ok(chi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfectly_separating_two_by_two() {
        // hand-built contingency table: 10 / 0 over 0 / 10
        let col: Vec<u32> = [vec![0; 10], vec![1; 10]].concat();
        let labels: Vec<u8> = [vec![0; 10], vec![1; 10]].concat();
        // oracle: every cell expects 5, each contributes (10-5)^2/5 or (0-5)^2/5
        let oracle = 4.0 * 25.0 / 5.0;
        assert_eq!(oracle, 20.0);
        assert!((chi_square_score(&col, &labels).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn independent_and_constant_features_score_zero() {
        let col = [0, 1, 0, 1, 0, 1, 0, 1];
        let labels = [0, 0, 1, 1, 0, 0, 1, 1];
        assert_eq!(chi_square_score(&col, &labels).unwrap(), 0.0);
        assert_eq!(chi_square_score(&[4; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.0);
        assert_eq!(chi_square_score(&[4; 3], &[1; 3]).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(chi_square_score(&[], &[]), Err(AnomalyError::Empty)));
        assert!(chi_square_score(&[1, 2], &[0]).is_err());
    }
}
