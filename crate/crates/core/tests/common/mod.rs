//! Shared helpers for the oracle suites: an independent dense solver and
//! deterministic random instances.

#![allow(dead_code)] // not every suite uses every helper
#![allow(clippy::needless_range_loop)]

use carclust_core::rng::Rng;
use carclust_core::{CentroidSequence, LongitudinalPanel, Mat, PartitionSequence, VarCoefficients};

/// Gauss-Jordan solve of `A X = B` with partial pivoting. Deliberately a
/// different algorithm from the library's eigendecomposition path so the
/// oracle comparisons are two-route.
pub fn gauss_solve(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let mut aug: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a[i].clone();
            row.extend_from_slice(&b[i]);
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| aug[x][col].abs().partial_cmp(&aug[y][col].abs()).unwrap())
            .unwrap();
        assert!(aug[pivot][col].abs() > 1e-12, "oracle matrix is singular");
        aug.swap(col, pivot);
        let p = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = aug[row][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n + m {
                let sub = factor * aug[col][k];
                aug[row][k] -= sub;
            }
        }
    }
    aug.into_iter().map(|row| row[n..].to_vec()).collect()
}

pub fn random_panel(rng: &mut Rng, n: usize, j: usize, t: usize) -> LongitudinalPanel {
    LongitudinalPanel::from_fn(n, j, t, |_, _, _| rng.normal()).unwrap()
}

/// Random labels with every cluster occupied at every time.
pub fn random_partition_nonempty(rng: &mut Rng, n: usize, t: usize, g: usize) -> PartitionSequence {
    assert!(n >= g);
    let labels = (0..t)
        .map(|_| {
            let mut row: Vec<usize> = (0..n).map(|_| rng.below(g)).collect();
            let mut slots: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut slots);
            for (cluster, &i) in slots.iter().take(g).enumerate() {
                row[i] = cluster;
            }
            row
        })
        .collect();
    PartitionSequence::new(labels, g).unwrap()
}

pub fn random_coefficients(rng: &mut Rng, j: usize, p: usize) -> VarCoefficients {
    let intercept = (0..j).map(|_| 0.3 * rng.normal()).collect();
    let lags = (0..p)
        .map(|_| Mat::from_fn(j, j, |_, _| 0.5 * rng.normal()))
        .collect();
    VarCoefficients::new(intercept, lags).unwrap()
}

pub fn random_centroids(rng: &mut Rng, g: usize, j: usize, t: usize) -> CentroidSequence {
    CentroidSequence::new(
        (0..t)
            .map(|_| Mat::from_fn(g, j, |_, _| rng.normal()))
            .collect(),
    )
    .unwrap()
}
