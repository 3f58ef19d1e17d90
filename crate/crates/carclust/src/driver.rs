//! Parallel execution of restarts, identical in outcome to the sequential
//! driver.
//!
//! Restarts are embarrassingly parallel (the panel is shared read-only);
//! results are reduced by scanning in restart order, so the winner matches
//! `fit_multistart` bit for bit regardless of thread interleaving. The
//! `CARCLUST_THREADS` environment variable caps the worker count.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use carclust_core::{
    fit_multistart, fit_restart, select_g_with, CHReport, CarError, FitConfig, FitResult,
    LongitudinalPanel,
};

/// Worker cap: `CARCLUST_THREADS` if set and positive, otherwise the
/// available parallelism.
pub fn thread_cap() -> usize {
    if let Ok(raw) = std::env::var("CARCLUST_THREADS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n >= 1 {
                return n;
            }
        }
    }
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Multi-start fit across `threads` workers; one thread falls back to the
/// sequential driver.
pub fn multistart(
    panel: &LongitudinalPanel,
    config: &FitConfig,
    threads: usize,
) -> Result<FitResult, CarError> {
    let workers = threads.min(config.n_restarts);
    if workers <= 1 {
        return fit_multistart(panel, config);
    }
    config.validate(panel)?;
    let next = AtomicUsize::new(0);
    let outcomes: Mutex<Vec<(usize, Result<FitResult, CarError>)>> =
        Mutex::new(Vec::with_capacity(config.n_restarts));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let restart = next.fetch_add(1, Ordering::Relaxed);
                if restart >= config.n_restarts {
                    break;
                }
                let outcome = fit_restart(panel, config, restart);
                outcomes.lock().unwrap().push((restart, outcome));
            });
        }
    });
    let mut outcomes = outcomes.into_inner().unwrap();
    outcomes.sort_by_key(|(restart, _)| *restart);
    let mut best: Option<FitResult> = None;
    for (_, outcome) in outcomes {
        if let Ok(result) = outcome {
            if best.as_ref().is_none_or(|b| result.objective < b.objective) {
                best = Some(result);
            }
        }
    }
    best.ok_or(CarError::AllRestartsFailed)
}

/// Cluster-count sweep with parallel restarts per candidate. Returns the
/// report together with the winning candidate's full fit.
pub fn select(
    panel: &LongitudinalPanel,
    g_range: std::ops::RangeInclusive<usize>,
    base: &FitConfig,
    threads: usize,
) -> Result<(CHReport, FitResult), CarError> {
    let mut fits: Vec<FitResult> = Vec::new();
    let report = select_g_with(panel, g_range, base, |p, cfg| {
        let result = multistart(p, cfg, threads)?;
        fits.push(result.clone());
        Ok(result)
    })?;
    let winner = fits
        .into_iter()
        .find(|f| f.partition.n_clusters() == report.selected_g)
        .ok_or(CarError::AllRestartsFailed)?;
    Ok((report, winner))
}
