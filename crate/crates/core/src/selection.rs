//! Calinski–Harabasz model selection over candidate cluster counts.
//!
//! Scatter matrices use the empirical per-time class means (the reporting
//! centroids), every time slice included, and the correction factor counts
//! all `n * T` unit-time observations.

use alloc::vec::Vec;

use crate::error::{CarError, Result};
use crate::estimator::{fit_multistart, FitConfig, FitResult};
use crate::linalg::Mat;
use crate::panel::{
    check_panel_partition, empirical_centroids, LongitudinalPanel, PartitionSequence,
};

/// One evaluated cluster count.
#[derive(Debug, Clone)]
pub struct ChCandidate {
    pub g: usize,
    pub ch_value: f64,
    pub objective: f64,
    pub trace_w: f64,
    pub trace_b: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restart_index: usize,
}

/// Sweep outcome: every candidate, any per-candidate failures, and the
/// winner (largest index value, ties to the smallest cluster count).
#[derive(Debug, Clone)]
pub struct CHReport {
    pub candidates: Vec<ChCandidate>,
    pub failures: Vec<(usize, CarError)>,
    pub selected_g: usize,
}

/// Within-cluster scatter `W`: outer products of deviations from the
/// empirical cluster means, summed over clusters, times and members.
pub fn within_scatter(panel: &LongitudinalPanel, part: &PartitionSequence) -> Result<Mat> {
    check_panel_partition(panel, part)?;
    let centroids = empirical_centroids(panel, part)?;
    let j = panel.n_vars();
    let mut w = Mat::zeros(j, j);
    for t in 0..panel.n_times() {
        for i in 0..panel.n_units() {
            let center = centroids.centroid(part.label(i, t), t);
            let x = panel.observation(i, t);
            for r in 0..j {
                let dr = x[r] - center[r];
                if dr == 0.0 {
                    continue;
                }
                for c in 0..j {
                    w.add_to(r, c, dr * (x[c] - center[c]));
                }
            }
        }
    }
    Ok(w)
}

/// Between-cluster scatter `B`: size-weighted outer products of cluster
/// means about the per-time grand mean.
pub fn between_scatter(panel: &LongitudinalPanel, part: &PartitionSequence) -> Result<Mat> {
    check_panel_partition(panel, part)?;
    let centroids = empirical_centroids(panel, part)?;
    let j = panel.n_vars();
    let mut b = Mat::zeros(j, j);
    for t in 0..panel.n_times() {
        let grand = panel.grand_mean(t);
        let counts = part.counts_at(t);
        for g in 0..part.n_clusters() {
            let n_gt = counts[g] as f64;
            let center = centroids.centroid(g, t);
            for r in 0..j {
                let dr = center[r] - grand[r];
                if dr == 0.0 {
                    continue;
                }
                for c in 0..j {
                    b.add_to(r, c, n_gt * dr * (center[c] - grand[c]));
                }
            }
        }
    }
    Ok(b)
}

/// Calinski–Harabasz index
/// `(trace B / trace W) * (n*T - G) / (G - 1)`; larger is better.
pub fn ch_index(panel: &LongitudinalPanel, part: &PartitionSequence) -> Result<f64> {
    if part.n_clusters() < 2 {
        return Err(CarError::UndefinedForSingleCluster);
    }
    let tw = within_scatter(panel, part)?.trace();
    let tb = between_scatter(panel, part)?.trace();
    if tw <= 0.0 {
        return Err(CarError::ZeroWithinScatter);
    }
    let obs = (panel.n_units() * panel.n_times()) as f64;
    let g = part.n_clusters() as f64;
    Ok((tb / tw) * (obs - g) / (g - 1.0))
}

/// Fits every cluster count in `g_range` with `base` settings (same seed per
/// candidate) using `fitter`, scores each fitted partition by the index, and
/// picks the maximizer.
pub fn select_g_with(
    panel: &LongitudinalPanel,
    g_range: core::ops::RangeInclusive<usize>,
    base: &FitConfig,
    mut fitter: impl FnMut(&LongitudinalPanel, &FitConfig) -> Result<FitResult>,
) -> Result<CHReport> {
    let (lo, hi) = (*g_range.start(), *g_range.end());
    if lo < 2 {
        return Err(CarError::InvalidConfig(
            "cluster range must start at 2 or more".into(),
        ));
    }
    if hi < lo {
        return Err(CarError::InvalidConfig("cluster range is empty".into()));
    }
    let mut candidates = Vec::new();
    let mut failures = Vec::new();
    for g in lo..=hi {
        let mut config = base.clone();
        config.n_clusters = g;
        let outcome = fitter(panel, &config).and_then(|result| {
            let tw = within_scatter(panel, &result.partition)?.trace();
            let tb = between_scatter(panel, &result.partition)?.trace();
            if tw <= 0.0 {
                return Err(CarError::ZeroWithinScatter);
            }
            let obs = (panel.n_units() * panel.n_times()) as f64;
            let ch = (tb / tw) * (obs - g as f64) / (g as f64 - 1.0);
            Ok(ChCandidate {
                g,
                ch_value: ch,
                objective: result.objective,
                trace_w: tw,
                trace_b: tb,
                iterations: result.iterations,
                converged: result.converged,
                restart_index: result.restart_index,
            })
        });
        match outcome {
            Ok(c) => candidates.push(c),
            Err(e) => failures.push((g, e)),
        }
    }
    let selected = candidates
        .iter()
        .max_by(|a, b| {
            a.ch_value
                .partial_cmp(&b.ch_value)
                .unwrap_or(core::cmp::Ordering::Equal)
                .then(b.g.cmp(&a.g)) // ties: smaller G wins under max_by
        })
        .map(|c| c.g);
    match selected {
        Some(g) => Ok(CHReport {
            candidates,
            failures,
            selected_g: g,
        }),
        None => Err(failures
            .into_iter()
            .next()
            .map(|(_, e)| e)
            .unwrap_or(CarError::AllRestartsFailed)),
    }
}

/// [`select_g_with`] driven by the standard multi-start fitter.
pub fn select_g(
    panel: &LongitudinalPanel,
    g_range: core::ops::RangeInclusive<usize>,
    base: &FitConfig,
) -> Result<CHReport> {
    select_g_with(panel, g_range, base, fit_multistart)
}
