//! Partition agreement scoring.

use alloc::vec;

use crate::error::{CarError, Result};

/// Adjusted Rand Index between two labelings of the same items.
///
/// Chance-corrected pair-counting agreement: 1 for identical partitions (up
/// to relabeling), about 0 for independent ones.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CarError::DimensionMismatch(
            "label sequences have different lengths".into(),
        ));
    }
    if a.is_empty() {
        return Err(CarError::InvalidInput("label sequences are empty".into()));
    }
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let choose2 = |n: usize| (n * n.saturating_sub(1)) as f64 / 2.0;
    let mut sum_cells = 0.0;
    let mut row_sums = vec![0usize; ka];
    let mut col_sums = vec![0usize; kb];
    for (r, row) in table.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            sum_cells += choose2(v);
            row_sums[r] += v;
            col_sums[c] += v;
        }
    }
    let sum_rows: f64 = row_sums.iter().map(|&v| choose2(v)).sum();
    let sum_cols: f64 = col_sums.iter().map(|&v| choose2(v)).sum();
    let total = choose2(a.len());
    let expected = sum_rows * sum_cols / total;
    let max_index = 0.5 * (sum_rows + sum_cols);
    if max_index == expected {
        return Ok(1.0);
    }
    Ok((sum_cells - expected) / (max_index - expected))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_up_to_relabeling_scores_one() {
        let a = [0, 0, 1, 1, 2, 2];
        let b = [1, 1, 2, 2, 0, 0];
        assert!((adjusted_rand_index(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partial_agreement_lands_strictly_between() {
        let a = [0, 0, 1, 1, 2, 2];
        let b = [0, 0, 0, 1, 1, 1];
        let ari = adjusted_rand_index(&a, &b).unwrap();
        assert!(ari > 0.0 && ari < 1.0, "{ari}");
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        assert!(adjusted_rand_index(&[0, 1], &[0]).is_err());
        assert!(adjusted_rand_index(&[], &[]).is_err());
    }
}
