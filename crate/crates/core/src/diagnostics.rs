//! Partition-dynamics summaries: transition matrices, marginal membership
//! shares and per-unit trajectories.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CarError, Result};
use crate::linalg::Mat;
use crate::panel::PartitionSequence;

/// Empirical cluster-to-cluster transition matrix (source cluster on the
/// rows, destination on the columns).
///
/// Rows whose source cluster is never occupied before the last time are kept
/// as all-zero and flagged in `empty_rows` rather than dropped, so the shape
/// stays `G x G`.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    pub probs: Mat,
    pub counts: Vec<Vec<usize>>,
    /// Off-diagonal transition count (number of actual switches).
    pub n_transitions: usize,
    pub empty_rows: Vec<bool>,
}

/// Counts adjacent-time membership pairs over `t = 1..T-1` and row-normalizes.
pub fn transition_matrix(part: &PartitionSequence) -> Result<TransitionMatrix> {
    if part.n_times() < 2 {
        return Err(CarError::SingleTimePoint);
    }
    let g = part.n_clusters();
    let mut counts = vec![vec![0usize; g]; g];
    for t in 1..part.n_times() {
        for i in 0..part.n_units() {
            counts[part.label(i, t - 1)][part.label(i, t)] += 1;
        }
    }
    let mut probs = Mat::zeros(g, g);
    let mut empty_rows = vec![false; g];
    let mut n_transitions = 0usize;
    for a in 0..g {
        let row_sum: usize = counts[a].iter().sum();
        if row_sum == 0 {
            empty_rows[a] = true;
            continue;
        }
        for b in 0..g {
            probs.set(a, b, counts[a][b] as f64 / row_sum as f64);
            if a != b {
                n_transitions += counts[a][b];
            }
        }
    }
    Ok(TransitionMatrix {
        probs,
        counts,
        n_transitions,
        empty_rows,
    })
}

/// Marginal membership share per cluster over all unit-time pairs.
pub fn membership_shares(part: &PartitionSequence) -> Vec<f64> {
    let mut counts = vec![0usize; part.n_clusters()];
    for t in 0..part.n_times() {
        for &g in part.labels_at(t) {
            counts[g] += 1;
        }
    }
    let total = (part.n_units() * part.n_times()) as f64;
    counts.into_iter().map(|c| c as f64 / total).collect()
}

/// One unit's cluster labels over time plus its switch count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitTrajectory {
    pub labels: Vec<usize>,
    /// Number of adjacent unequal label pairs.
    pub switch_count: usize,
}

pub fn unit_trajectory(part: &PartitionSequence, unit: usize) -> Result<UnitTrajectory> {
    if unit >= part.n_units() {
        return Err(CarError::UnknownUnit(unit));
    }
    let labels: Vec<usize> = (0..part.n_times()).map(|t| part.label(unit, t)).collect();
    let switch_count = labels.windows(2).filter(|w| w[0] != w[1]).count();
    Ok(UnitTrajectory {
        labels,
        switch_count,
    })
}
