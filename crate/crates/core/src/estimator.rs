//! Least-squares fit of the clustered autoregressive model by three-block
//! coordinate descent with multi-start.
//!
//! One iteration cycles three exact block minimizations of the squared
//! residual objective: the per-time centroid matrices, the stacked
//! autoregressive coefficients, and the per-unit cluster assignments. Each
//! block update is a least-squares (or assignment) problem solved in closed
//! form, so the objective never increases along the way. Restarts differ
//! only in their seeded initial partition; the best (lowest objective) run
//! wins, ties going to the lowest restart index.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CarError, Result};
use crate::linalg::{pinv_psd, pinv_psd_floor, Mat};
use crate::panel::{
    check_panel_partition, empirical_centroids, CentroidSequence, LongitudinalPanel,
    PartitionSequence, VarCoefficients,
};
use crate::rng::Rng;

/// How a restart builds its starting partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    /// Independent uniform cluster label per unit-time pair.
    RandomPartition,
    /// Static K-means per time slice, labels aligned across adjacent slices.
    SlicewiseKMeans,
    /// Alternate between the two across restarts (even: random, odd: slicewise).
    Mixed,
}

/// Settings for a fit run.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub n_clusters: usize,
    pub lag_order: usize,
    pub n_restarts: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
    pub init_strategy: InitStrategy,
}

impl FitConfig {
    pub fn new(n_clusters: usize, lag_order: usize) -> Self {
        FitConfig {
            n_clusters,
            lag_order,
            n_restarts: 10,
            max_iters: 200,
            rel_tol: 1e-8,
            seed: 0,
            init_strategy: InitStrategy::Mixed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, n: usize) -> Self {
        self.n_restarts = n;
        self
    }

    pub fn with_init(mut self, strategy: InitStrategy) -> Self {
        self.init_strategy = strategy;
        self
    }

    /// Checks the configuration against the target panel.
    pub fn validate(&self, panel: &LongitudinalPanel) -> Result<()> {
        if self.n_clusters == 0 {
            return Err(CarError::InvalidConfig(
                "cluster count must be at least 1".into(),
            ));
        }
        if self.n_clusters > panel.n_units() {
            return Err(CarError::InvalidConfig(format!(
                "{} clusters exceed {} units",
                self.n_clusters,
                panel.n_units()
            )));
        }
        if self.lag_order == 0 {
            return Err(CarError::InvalidConfig(
                "lag order must be at least 1".into(),
            ));
        }
        if panel.n_times() < self.lag_order + 2 {
            return Err(CarError::InvalidConfig(format!(
                "lag order {} needs at least {} times, panel has {}",
                self.lag_order,
                self.lag_order + 2,
                panel.n_times()
            )));
        }
        if self.n_restarts == 0 {
            return Err(CarError::InvalidConfig("need at least one restart".into()));
        }
        if self.max_iters == 0 {
            return Err(CarError::InvalidConfig(
                "need at least one iteration".into(),
            ));
        }
        if !self.rel_tol.is_finite() || self.rel_tol <= 0.0 {
            return Err(CarError::InvalidConfig(
                "tolerance must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of one (or the best of several) coordinate-descent runs.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Fitted partition at all `T` times. Slices before `lag_order` are not
    /// identified by the objective; they are assigned by nearest model
    /// centroid and listed in `static_times`.
    pub partition: PartitionSequence,
    /// Fitted centroid parameters, times `0..T-1`.
    pub model_centroids: CentroidSequence,
    /// Per-time class means of the fitted partition, all `T` times.
    pub empirical_centroids: CentroidSequence,
    pub coefficients: VarCoefficients,
    /// Final value of the squared-residual objective.
    pub objective: f64,
    /// Completed coordinate-descent cycles.
    pub iterations: usize,
    pub converged: bool,
    pub restart_index: usize,
    /// Objective after initialization and then after every block update
    /// (three entries per cycle). Non-increasing.
    pub objective_trace: Vec<f64>,
    /// Times whose assignments do not enter the objective (`0..lag_order`).
    pub static_times: Vec<usize>,
}

fn check_objective_args(
    panel: &LongitudinalPanel,
    part: &PartitionSequence,
    centroids: &CentroidSequence,
    coeffs: &VarCoefficients,
) -> Result<()> {
    check_panel_partition(panel, part)?;
    let t = panel.n_times();
    let p = coeffs.lag_order();
    if coeffs.dim() != panel.n_vars() {
        return Err(CarError::DimensionMismatch(format!(
            "coefficients are {}-dimensional, panel has {} variables",
            coeffs.dim(),
            panel.n_vars()
        )));
    }
    if centroids.n_clusters() != part.n_clusters() {
        return Err(CarError::DimensionMismatch(format!(
            "centroids hold {} clusters, partition {}",
            centroids.n_clusters(),
            part.n_clusters()
        )));
    }
    if centroids.n_vars() != panel.n_vars() {
        return Err(CarError::DimensionMismatch(format!(
            "centroids are {}-variate, panel has {} variables",
            centroids.n_vars(),
            panel.n_vars()
        )));
    }
    if centroids.n_times() + 1 < t {
        return Err(CarError::DimensionMismatch(format!(
            "centroid sequence covers {} times, need at least {}",
            centroids.n_times(),
            t - 1
        )));
    }
    if t < p + 1 {
        return Err(CarError::DimensionMismatch(format!(
            "lag order {p} leaves no observed times in a {t}-time panel"
        )));
    }
    Ok(())
}

/// Predicted centroid matrix (`G x J`) at observation time `t >= lag_order`.
fn predicted_at(centroids: &CentroidSequence, coeffs: &VarCoefficients, t: usize) -> Mat {
    let lagged: Vec<&Mat> = (1..=coeffs.lag_order())
        .map(|p| centroids.slice(t - p))
        .collect();
    coeffs.predict_centroids(&lagged)
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Relative floor under which a lag direction counts as absent.
///
/// The centroid/coefficient factorization is scale-ambiguous along
/// directions where a lag matrix is nearly zero: the exact least-squares
/// centroid inflates by the reciprocal of the tiny singular value while the
/// objective barely moves, and the inflated values then wreck the
/// conditioning of the next coefficient solve. Directions whose normal
/// matrix falls below this fraction of the strongest lag signal are pinned
/// to zero (the minimum-norm reading of an unidentified direction).
const LAG_SIGNAL_FLOOR: f64 = 1e-8;

/// Squared-residual objective, summed over observation times
/// `lag_order..T-1`: each unit against the predicted centroid of its cluster.
pub fn objective(
    panel: &LongitudinalPanel,
    part: &PartitionSequence,
    centroids: &CentroidSequence,
    coeffs: &VarCoefficients,
) -> Result<f64> {
    check_objective_args(panel, part, centroids, coeffs)?;
    let p = coeffs.lag_order();
    let mut total = 0.0;
    for t in p..panel.n_times() {
        let pred = predicted_at(centroids, coeffs, t);
        for i in 0..panel.n_units() {
            total += dist_sq(panel.observation(i, t), pred.row(part.label(i, t)));
        }
    }
    Ok(total)
}

/// Exact minimization of the objective over the centroid sequence, one time
/// slice after another (ascending), holding coefficients and partition fixed.
///
/// Each slice update accounts for every observation time the slice feeds
/// (all of them for `P = 1` is exactly one), and the per-cluster subproblems
/// are solved through the pseudo-inverse, so rank-deficient lag matrices get
/// the minimum-norm solution instead of failing. Slices updated earlier in
/// the sweep are visible to later ones, which is what makes the sweep
/// non-increasing for `P >= 2`.
///
/// `current` supplies the starting values of all slices; for `P = 1` its
/// values are irrelevant (every slice has a closed-form one-shot solution).
pub fn update_centroids(
    panel: &LongitudinalPanel,
    part: &PartitionSequence,
    coeffs: &VarCoefficients,
    current: &CentroidSequence,
) -> Result<CentroidSequence> {
    check_objective_args(panel, part, current, coeffs)?;
    let t_count = panel.n_times();
    let p_max = coeffs.lag_order();
    let g_count = part.n_clusters();
    let j = panel.n_vars();

    // Per-time cluster sums and counts of the raw observations.
    let mut counts: Vec<Vec<usize>> = Vec::with_capacity(t_count);
    let mut sums: Vec<Mat> = Vec::with_capacity(t_count);
    for t in 0..t_count {
        let c = part.counts_at(t);
        if t >= p_max {
            if let Some(empty) = c.iter().position(|&k| k == 0) {
                return Err(CarError::EmptyCluster {
                    cluster: empty,
                    time: t,
                });
            }
        }
        let mut s = Mat::zeros(g_count, j);
        for i in 0..panel.n_units() {
            let g = part.label(i, t);
            for (v, x) in panel.observation(i, t).iter().enumerate() {
                s.add_to(g, v, *x);
            }
        }
        counts.push(c);
        sums.push(s);
    }

    let grams: Vec<Mat> = (0..p_max)
        .map(|p| coeffs.lag_matrix(p).tr_mul(coeffs.lag_matrix(p)))
        .collect();
    let intercept = coeffs.intercept();

    // Absolute identification floor: scaled by the strongest lag gram and
    // the unit count, so a lag that is zero (or negligibly small) next to
    // the others pins its centroid directions to zero instead of blowing up.
    let lag_scale = grams.iter().map(Mat::trace).fold(0.0f64, f64::max);
    let eig_floor = LAG_SIGNAL_FLOOR * lag_scale * panel.n_units() as f64;

    let mut work: Vec<Mat> = (0..t_count.saturating_sub(1))
        .map(|s| current.slice(s).clone())
        .collect();

    for s in 0..work.len() {
        // Gather the normal equations of slice s across every observation
        // time it enters: sum_p n_{g,s+p} A_p'A_p on the left, cluster sums
        // of the lag-p residual times A_p on the right.
        let mut rhs = Mat::zeros(g_count, j);
        let mut lhs: Vec<Mat> = vec![Mat::zeros(j, j); g_count];
        let mut touched = false;
        for p in 1..=p_max {
            let t = s + p;
            if t < p_max || t >= t_count {
                continue;
            }
            touched = true;
            let a_p = coeffs.lag_matrix(p - 1);
            for g in 0..g_count {
                let n_gt = counts[t][g] as f64;
                // Residual cluster sum: raw sum minus n_gt * (c + other lags).
                let mut resid = vec![0.0; j];
                for v in 0..j {
                    resid[v] = sums[t].get(g, v) - n_gt * intercept[v];
                }
                for q in 1..=p_max {
                    if q == p {
                        continue;
                    }
                    let a_q = coeffs.lag_matrix(q - 1);
                    let lagged = work[t - q].row(g);
                    for v in 0..j {
                        let mut acc = 0.0;
                        for k in 0..j {
                            acc += a_q.get(v, k) * lagged[k];
                        }
                        resid[v] -= n_gt * acc;
                    }
                }
                // rhs_g += resid' A_p  (row vector times matrix)
                for v in 0..j {
                    let mut acc = 0.0;
                    for k in 0..j {
                        acc += resid[k] * a_p.get(k, v);
                    }
                    rhs.add_to(g, v, acc);
                }
                for r in 0..j {
                    for c in 0..j {
                        lhs[g].add_to(r, c, n_gt * grams[p - 1].get(r, c));
                    }
                }
            }
        }
        if !touched {
            continue;
        }
        let mut new_slice = Mat::zeros(g_count, j);
        for g in 0..g_count {
            let pinv = pinv_psd_floor(&lhs[g], eig_floor);
            for v in 0..j {
                let mut acc = 0.0;
                for k in 0..j {
                    acc += rhs.get(g, k) * pinv.get(k, v);
                }
                new_slice.set(g, v, acc);
            }
        }
        work[s] = new_slice;
    }

    CentroidSequence::new(work)
}

/// Minimum-norm least-squares solution of the stacked coefficient
/// regression over observation times `lag_order..T-1`, holding partition and
/// centroids fixed.
pub fn update_coefficients(
    panel: &LongitudinalPanel,
    part: &PartitionSequence,
    centroids: &CentroidSequence,
    lag_order: usize,
) -> Result<VarCoefficients> {
    check_panel_partition(panel, part)?;
    let t_count = panel.n_times();
    let j = panel.n_vars();
    let g_count = part.n_clusters();
    if lag_order == 0 {
        return Err(CarError::InvalidConfig(
            "lag order must be at least 1".into(),
        ));
    }
    if t_count <= lag_order {
        return Err(CarError::DegenerateDesign(format!(
            "lag order {lag_order} leaves no stacked rows in a {t_count}-time panel"
        )));
    }
    if centroids.n_times() + 1 < t_count {
        return Err(CarError::DimensionMismatch(format!(
            "centroid sequence covers {} times, need at least {}",
            centroids.n_times(),
            t_count - 1
        )));
    }
    if centroids.n_clusters() != g_count || centroids.n_vars() != j {
        return Err(CarError::DimensionMismatch(
            "centroid shape disagrees with arguments".into(),
        ));
    }

    let width = j * lag_order + 1;
    let mut gram = Mat::zeros(width, width); // sum of X'U'UX over times
    let mut cross = Mat::zeros(width, j); // sum of X'U'X over times

    let mut aug = vec![0.0; width];
    for t in lag_order..t_count {
        let counts = part.counts_at(t);
        // Per-cluster raw sums at time t.
        let mut sums = Mat::zeros(g_count, j);
        for i in 0..panel.n_units() {
            let g = part.label(i, t);
            for (v, x) in panel.observation(i, t).iter().enumerate() {
                sums.add_to(g, v, *x);
            }
        }
        for g in 0..g_count {
            let n_gt = counts[g] as f64;
            if n_gt == 0.0 {
                continue;
            }
            aug[0] = 1.0;
            for p in 1..=lag_order {
                let lagged = centroids.slice(t - p).row(g);
                aug[1 + (p - 1) * j..1 + p * j].copy_from_slice(lagged);
            }
            for r in 0..width {
                let w = n_gt * aug[r];
                if w == 0.0 {
                    continue;
                }
                for c in 0..width {
                    gram.add_to(r, c, w * aug[c]);
                }
            }
            for r in 0..width {
                let a = aug[r];
                if a == 0.0 {
                    continue;
                }
                for v in 0..j {
                    cross.add_to(r, v, a * sums.get(g, v));
                }
            }
        }
    }

    let solution = pinv_psd(&gram).mul(&cross); // width x J, equals B'
    VarCoefficients::from_stacked(&solution.transpose(), lag_order)
}

/// Pointwise-optimal reassignment of every unit, holding centroids and
/// coefficients fixed.
///
/// Times `lag_order..T-1` assign by nearest predicted centroid; earlier
/// times (outside the objective) assign by nearest model centroid of the
/// same slice. Ties go to the lowest cluster index.
pub fn update_partition(
    panel: &LongitudinalPanel,
    centroids: &CentroidSequence,
    coeffs: &VarCoefficients,
) -> Result<PartitionSequence> {
    let t_count = panel.n_times();
    let p = coeffs.lag_order();
    if coeffs.dim() != panel.n_vars() || centroids.n_vars() != panel.n_vars() {
        return Err(CarError::DimensionMismatch(
            "variable dimensions disagree".into(),
        ));
    }
    if centroids.n_times() + 1 < t_count {
        return Err(CarError::DimensionMismatch(format!(
            "centroid sequence covers {} times, need at least {}",
            centroids.n_times(),
            t_count - 1
        )));
    }
    if t_count < p + 1 {
        return Err(CarError::DimensionMismatch(format!(
            "lag order {p} leaves no observed times in a {t_count}-time panel"
        )));
    }
    let g_count = centroids.n_clusters();
    let mut labels = Vec::with_capacity(t_count);
    for t in 0..t_count {
        let refs = if t < p {
            centroids.slice(t).clone()
        } else {
            predicted_at(centroids, coeffs, t)
        };
        let mut row = Vec::with_capacity(panel.n_units());
        for i in 0..panel.n_units() {
            let x = panel.observation(i, t);
            let mut best = 0usize;
            let mut best_d = dist_sq(x, refs.row(0));
            for g in 1..g_count {
                let d = dist_sq(x, refs.row(g));
                if d < best_d {
                    best_d = d;
                    best = g;
                }
            }
            row.push(best);
        }
        labels.push(row);
    }
    PartitionSequence::new(labels, g_count)
}

/// Reference points used for assignment and reseeding at time `t`.
fn references_at(centroids: &CentroidSequence, coeffs: &VarCoefficients, t: usize) -> Mat {
    if t < coeffs.lag_order() {
        centroids.slice(t).clone()
    } else {
        predicted_at(centroids, coeffs, t)
    }
}

/// Moves units into clusters that came out of an assignment pass empty.
///
/// The unit moved into an empty cluster `g` at time `t` is the one with the
/// largest current squared residual among the units that belonged to `g` at
/// `t` before the pass (falling back to all units if none of those can be
/// spared). Restricting to previous members keeps the post-repair objective
/// at or below the pre-pass one; donors are only taken from clusters with at
/// least two members so no new hole opens.
fn repair_empty_clusters(
    panel: &LongitudinalPanel,
    part: &mut PartitionSequence,
    previous: Option<&PartitionSequence>,
    refs_at: impl Fn(usize, &PartitionSequence) -> Mat,
) {
    let g_count = part.n_clusters();
    for t in 0..part.n_times() {
        loop {
            let counts = part.counts_at(t);
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let refs = refs_at(t, part);
            let residual = |i: usize| dist_sq(panel.observation(i, t), refs.row(part.label(i, t)));
            let pick = |restrict_prev: bool| -> Option<usize> {
                let mut best: Option<(usize, f64)> = None;
                for i in 0..panel.n_units() {
                    if counts[part.label(i, t)] < 2 {
                        continue;
                    }
                    if restrict_prev {
                        match previous {
                            Some(prev) if prev.label(i, t) == empty => {}
                            _ => continue,
                        }
                    }
                    let d = residual(i);
                    if best.is_none_or(|(_, bd)| d > bd) {
                        best = Some((i, d));
                    }
                }
                best.map(|(i, _)| i)
            };
            let chosen = if previous.is_some() {
                pick(true).or_else(|| pick(false))
            } else {
                pick(false)
            };
            match chosen {
                Some(i) => part.set_label(i, t, empty),
                None => break, // fewer units than clusters; nothing to move
            }
        }
        debug_assert!(
            part.counts_at(t).iter().all(|&c| c > 0) || part.n_units() < g_count,
            "repair left an empty cluster"
        );
    }
}

/// Per-slice empirical means of the units currently assigned to each
/// cluster, with empty clusters parked at the grand mean. Reseeding
/// reference for freshly drawn partitions.
fn slice_means(panel: &LongitudinalPanel, part: &PartitionSequence, t: usize) -> Mat {
    let g_count = part.n_clusters();
    let j = panel.n_vars();
    let counts = part.counts_at(t);
    let grand = panel.grand_mean(t);
    let mut out = Mat::zeros(g_count, j);
    for i in 0..panel.n_units() {
        let g = part.label(i, t);
        for (v, x) in panel.observation(i, t).iter().enumerate() {
            out.add_to(g, v, *x);
        }
    }
    for g in 0..g_count {
        if counts[g] == 0 {
            for v in 0..j {
                out.set(g, v, grand[v]);
            }
        } else {
            let inv = 1.0 / counts[g] as f64;
            for v in 0..j {
                out.set(g, v, out.get(g, v) * inv);
            }
        }
    }
    out
}

fn random_partition(n_units: usize, n_times: usize, g: usize, rng: &mut Rng) -> PartitionSequence {
    let labels = (0..n_times)
        .map(|_| (0..n_units).map(|_| rng.below(g)).collect())
        .collect();
    PartitionSequence::new(labels, g).expect("labels drawn in range")
}

/// Lloyd iterations on one time slice with k-means++ seeding.
fn kmeans_slice(x: &Mat, g: usize, rng: &mut Rng) -> (Vec<usize>, Mat) {
    let n = x.rows();
    let j = x.cols();
    let mut centers = Mat::zeros(g, j);
    // k-means++ seeding
    let first = rng.below(n);
    centers.row_mut(0).copy_from_slice(x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| dist_sq(x.row(i), centers.row(0))).collect();
    for k in 1..g {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.next_f64() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.below(n)
        };
        centers.row_mut(k).copy_from_slice(x.row(idx));
        for i in 0..n {
            d2[i] = d2[i].min(dist_sq(x.row(i), centers.row(k)));
        }
    }

    let mut labels = vec![0usize; n];
    for _ in 0..50 {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0usize;
            let mut best_d = dist_sq(x.row(i), centers.row(0));
            for k in 1..g {
                let d = dist_sq(x.row(i), centers.row(k));
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        // refill empty clusters with the farthest point of a donor cluster
        loop {
            let mut counts = vec![0usize; g];
            for &l in &labels {
                counts[l] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let mut far: Option<(usize, f64)> = None;
            for i in 0..n {
                if counts[labels[i]] < 2 {
                    continue;
                }
                let d = dist_sq(x.row(i), centers.row(labels[i]));
                if far.is_none_or(|(_, fd)| d > fd) {
                    far = Some((i, d));
                }
            }
            match far {
                Some((i, _)) => {
                    labels[i] = empty;
                    changed = true;
                }
                None => break,
            }
        }
        // recompute means
        let mut counts = vec![0usize; g];
        let mut sums = Mat::zeros(g, j);
        for i in 0..n {
            counts[labels[i]] += 1;
            for (v, val) in x.row(i).iter().enumerate() {
                sums.add_to(labels[i], v, *val);
            }
        }
        for k in 0..g {
            if counts[k] > 0 {
                let inv = 1.0 / counts[k] as f64;
                for v in 0..j {
                    sums.set(k, v, sums.get(k, v) * inv);
                }
            }
        }
        centers = sums;
        if !changed {
            break;
        }
    }
    (labels, centers)
}

/// Greedy nearest-centroid matching of the current slice labels onto the
/// previous slice's, so cluster identities persist across time.
fn align_labels(prev_centers: &Mat, centers: &Mat) -> Vec<usize> {
    let g = centers.rows();
    let mut map = vec![usize::MAX; g]; // current label -> aligned label
    let mut prev_used = vec![false; g];
    let mut cur_used = vec![false; g];
    for _ in 0..g {
        let mut best: Option<(usize, usize, f64)> = None;
        for cur in 0..g {
            if cur_used[cur] {
                continue;
            }
            for prev in 0..g {
                if prev_used[prev] {
                    continue;
                }
                let d = dist_sq(centers.row(cur), prev_centers.row(prev));
                if best.is_none_or(|(_, _, bd)| d < bd) {
                    best = Some((cur, prev, d));
                }
            }
        }
        let (cur, prev, _) = best.expect("unmatched labels remain");
        map[cur] = prev;
        cur_used[cur] = true;
        prev_used[prev] = true;
    }
    map
}

fn slicewise_partition(panel: &LongitudinalPanel, g: usize, rng: &mut Rng) -> PartitionSequence {
    let mut labels: Vec<Vec<usize>> = Vec::with_capacity(panel.n_times());
    let mut prev_centers: Option<Mat> = None;
    for t in 0..panel.n_times() {
        let (mut slice_labels, mut centers) = kmeans_slice(panel.slice(t), g, rng);
        if let Some(prev) = &prev_centers {
            let map = align_labels(prev, &centers);
            for l in &mut slice_labels {
                *l = map[*l];
            }
            let mut aligned = Mat::zeros(g, centers.cols());
            for (cur, &target) in map.iter().enumerate() {
                aligned.row_mut(target).copy_from_slice(centers.row(cur));
            }
            centers = aligned;
        }
        prev_centers = Some(centers);
        labels.push(slice_labels);
    }
    PartitionSequence::new(labels, g).expect("aligned labels stay in range")
}

/// Canonical cluster-label gauge for one-lag fits.
///
/// With one lag, each centroid slice feeds exactly one observation time, so
/// permuting the labels at time `t` together with the rows of slice `t - 1`
/// leaves every residual unchanged: the objective cannot identify cluster
/// labels ACROSS time and random starts converge to arbitrarily shuffled
/// gauges. Transition diagnostics only make sense in a fixed gauge, so each
/// finished descent is relabeled for label continuity: slice by slice, the
/// empirical class means are greedily matched to the previous time's (the
/// same rule the slicewise initializer uses). For two and more lags a slice
/// feeds several times, the gauge is pinned up to one global permutation,
/// and nothing needs doing.
fn align_gauge(
    panel: &LongitudinalPanel,
    part: &mut PartitionSequence,
    centroids: &mut CentroidSequence,
) -> Result<()> {
    let t_count = panel.n_times();
    if part.n_clusters() < 2 || t_count < 3 {
        return Ok(());
    }
    let g_count = part.n_clusters();
    let emp = empirical_centroids(panel, part)?;
    let mut reference = emp.slice(1).clone();
    let mut new_slices: Vec<Mat> = (0..t_count - 1)
        .map(|s| centroids.slice(s).clone())
        .collect();
    for t in 2..t_count {
        let map = align_labels(&reference, emp.slice(t));
        for i in 0..part.n_units() {
            let old = part.label(i, t);
            part.set_label(i, t, map[old]);
        }
        let mut aligned_slice = Mat::zeros(g_count, panel.n_vars());
        let mut aligned_ref = Mat::zeros(g_count, panel.n_vars());
        for (old, &new) in map.iter().enumerate() {
            aligned_slice
                .row_mut(new)
                .copy_from_slice(centroids.slice(t - 1).row(old));
            aligned_ref
                .row_mut(new)
                .copy_from_slice(emp.slice(t).row(old));
        }
        new_slices[t - 1] = aligned_slice;
        reference = aligned_ref;
    }
    *centroids = CentroidSequence::new(new_slices)?;
    Ok(())
}

fn initial_partition(
    panel: &LongitudinalPanel,
    config: &FitConfig,
    restart: usize,
    rng: &mut Rng,
) -> PartitionSequence {
    let use_random = match config.init_strategy {
        InitStrategy::RandomPartition => true,
        InitStrategy::SlicewiseKMeans => false,
        InitStrategy::Mixed => restart.is_multiple_of(2),
    };
    let mut part = if use_random {
        random_partition(panel.n_units(), panel.n_times(), config.n_clusters, rng)
    } else {
        slicewise_partition(panel, config.n_clusters, rng)
    };
    repair_empty_clusters(panel, &mut part, None, |t, current| {
        slice_means(panel, current, t)
    });
    part
}

fn descend(
    panel: &LongitudinalPanel,
    config: &FitConfig,
    mut part: PartitionSequence,
    restart: usize,
) -> Result<FitResult> {
    let t_count = panel.n_times();
    let p = config.lag_order;

    let mut centroids = empirical_centroids(panel, &part)?.truncated(t_count - 1)?;
    let mut coeffs = VarCoefficients::identity_dynamics(panel.n_vars(), p);

    let mut current = objective(panel, &part, &centroids, &coeffs)?;
    let mut trace = vec![current];
    let mut converged = false;
    let mut iterations = 0;

    // Each block update is a closed-form minimizer, so candidates can only
    // tie or improve; a candidate is still discarded in the rare
    // ill-conditioned case where the identification floor or roundoff lands
    // it above the incumbent, keeping the trace non-increasing
    // unconditionally.
    for _ in 0..config.max_iters {
        let cycle_start = current;

        let cand_centroids = update_centroids(panel, &part, &coeffs, &centroids)?;
        let cand_obj = objective(panel, &part, &cand_centroids, &coeffs)?;
        if cand_obj <= current {
            centroids = cand_centroids;
            current = cand_obj;
        }
        trace.push(current);

        let cand_coeffs = update_coefficients(panel, &part, &centroids, p)?;
        let cand_obj = objective(panel, &part, &centroids, &cand_coeffs)?;
        if cand_obj <= current {
            coeffs = cand_coeffs;
            current = cand_obj;
        }
        trace.push(current);

        let mut cand_part = update_partition(panel, &centroids, &coeffs)?;
        repair_empty_clusters(panel, &mut cand_part, Some(&part), |t, _| {
            references_at(&centroids, &coeffs, t)
        });
        let cand_obj = objective(panel, &cand_part, &centroids, &coeffs)?;
        if cand_obj <= current {
            part = cand_part;
            current = cand_obj;
        }
        trace.push(current);

        iterations += 1;
        let denom = cycle_start.max(1e-300);
        if (cycle_start - current) / denom < config.rel_tol {
            converged = true;
            break;
        }
    }

    if p == 1 {
        align_gauge(panel, &mut part, &mut centroids)?;
    }
    let empirical = empirical_centroids(panel, &part)?;
    Ok(FitResult {
        partition: part,
        model_centroids: centroids,
        empirical_centroids: empirical,
        coefficients: coeffs,
        objective: current,
        iterations,
        converged,
        restart_index: restart,
        objective_trace: trace,
        static_times: (0..p).collect(),
    })
}

/// One coordinate-descent run from the seeded initialization of `restart`.
pub fn fit_restart(
    panel: &LongitudinalPanel,
    config: &FitConfig,
    restart: usize,
) -> Result<FitResult> {
    config.validate(panel)?;
    let mut rng = Rng::substream(config.seed, restart as u64);
    let part = initial_partition(panel, config, restart, &mut rng);
    descend(panel, config, part, restart)
}

/// Single coordinate-descent run (restart 0).
pub fn fit(panel: &LongitudinalPanel, config: &FitConfig) -> Result<FitResult> {
    fit_restart(panel, config, 0)
}

/// Coordinate descent from a caller-supplied starting partition.
///
/// Empty clusters in the start are reseeded the same way random starts are.
pub fn fit_with_init(
    panel: &LongitudinalPanel,
    config: &FitConfig,
    init: &PartitionSequence,
) -> Result<FitResult> {
    config.validate(panel)?;
    check_panel_partition(panel, init)?;
    if init.n_clusters() != config.n_clusters {
        return Err(CarError::InvalidConfig(format!(
            "initial partition has {} clusters, config asks for {}",
            init.n_clusters(),
            config.n_clusters
        )));
    }
    let mut part = init.clone();
    repair_empty_clusters(panel, &mut part, None, |t, current| {
        slice_means(panel, current, t)
    });
    descend(panel, config, part, 0)
}

/// Best of `config.n_restarts` independent runs; deterministic given the
/// seed, ties resolved to the lowest restart index.
pub fn fit_multistart(panel: &LongitudinalPanel, config: &FitConfig) -> Result<FitResult> {
    config.validate(panel)?;
    let mut best: Option<FitResult> = None;
    for restart in 0..config.n_restarts {
        if let Ok(result) = fit_restart(panel, config, restart) {
            if best.as_ref().is_none_or(|b| result.objective < b.objective) {
                best = Some(result);
            }
        }
    }
    best.ok_or(CarError::AllRestartsFailed)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact data from a known one-lag law: every observation sits on its
    /// cluster's predicted centroid.
    fn exact_instance() -> (
        LongitudinalPanel,
        PartitionSequence,
        CentroidSequence,
        VarCoefficients,
    ) {
        let coeffs = VarCoefficients::new(
            vec![0.2, -0.1],
            vec![Mat::from_rows(2, 2, &[0.8, 0.1, -0.2, 0.9])],
        )
        .unwrap();
        let c0 = Mat::from_rows(2, 2, &[0.0, 0.0, 4.0, 4.0]);
        let mut slices = vec![c0];
        for t in 1..3 {
            let prev = &slices[t - 1];
            slices.push(coeffs.predict_centroids(&[prev]));
        }
        let centroids = CentroidSequence::new(slices.clone()).unwrap();
        // 4 units, alternating clusters, constant membership.
        let labels = vec![vec![0, 1, 0, 1]; 3];
        let part = PartitionSequence::new(labels, 2).unwrap();
        let panel = LongitudinalPanel::from_fn(4, 2, 3, |i, v, t| {
            let g = i % 2;
            if t == 0 {
                slices[0].get(g, v)
            } else {
                // x_t = predicted centroid from the lag law
                let pred = coeffs.predict_centroids(&[&slices[t - 1]]);
                pred.get(g, v)
            }
        })
        .unwrap();
        (panel, part, centroids.truncated(2).unwrap(), coeffs)
    }

    #[test]
    fn objective_is_zero_on_exact_fit() {
        let (panel, part, centroids, coeffs) = exact_instance();
        let f = objective(&panel, &part, &centroids, &coeffs).unwrap();
        assert!(f.abs() < 1e-24, "objective {f}");
    }

    #[test]
    fn objective_matches_naive_loop() {
        // Random-ish instance, n=3, J=2, T=3, G=2, P=1; oracle is the fully
        // unrolled five-loop residual sum.
        let panel = LongitudinalPanel::from_fn(3, 2, 3, |i, v, t| {
            libm::sin((3 + i * 7 + v * 11 + t * 13) as f64)
        })
        .unwrap();
        let part =
            PartitionSequence::new(vec![vec![0, 1, 0], vec![1, 1, 0], vec![0, 1, 1]], 2).unwrap();
        let centroids = CentroidSequence::new(vec![
            Mat::from_rows(2, 2, &[0.3, -0.4, 1.1, 0.2]),
            Mat::from_rows(2, 2, &[-0.7, 0.5, 0.9, -1.3]),
        ])
        .unwrap();
        let coeffs = VarCoefficients::new(
            vec![0.1, -0.2],
            vec![Mat::from_rows(2, 2, &[0.5, 0.3, -0.1, 0.7])],
        )
        .unwrap();

        let mut oracle = 0.0;
        for t in 1..3usize {
            for i in 0..3 {
                for v in 0..2 {
                    let g = part.label(i, t);
                    let mut pred = coeffs.intercept()[v];
                    for k in 0..2 {
                        pred += coeffs.lag_matrix(0).get(v, k) * centroids.value(g, k, t - 1);
                    }
                    let r = panel.value(i, v, t) - pred;
                    oracle += r * r;
                }
            }
        }
        let f = objective(&panel, &part, &centroids, &coeffs).unwrap();
        assert!(
            (f - oracle).abs() < 1e-12 * (1.0 + oracle),
            "{f} vs {oracle}"
        );
    }

    #[test]
    fn doubling_residuals_quadruples_objective() {
        let (panel, part, centroids, coeffs) = exact_instance();
        // Shift every observation 0.5 away from its prediction, then 1.0:
        // residuals double, objective must quadruple.
        let bump = |delta: f64| {
            LongitudinalPanel::from_fn(4, 2, 3, |i, v, t| panel.value(i, v, t) + delta).unwrap()
        };
        let f1 = objective(&bump(0.5), &part, &centroids, &coeffs).unwrap();
        let f2 = objective(&bump(1.0), &part, &centroids, &coeffs).unwrap();
        assert!((f2 - 4.0 * f1).abs() < 1e-9 * (1.0 + f2), "{f2} vs 4*{f1}");
    }

    #[test]
    fn identity_dynamics_reduce_centroid_update_to_grouped_means() {
        let panel = LongitudinalPanel::from_fn(5, 2, 3, |i, v, t| {
            libm::cos((1 + i * 3 + v * 5 + t * 17) as f64)
        })
        .unwrap();
        let part = PartitionSequence::new(
            vec![
                vec![0, 0, 1, 1, 0],
                vec![1, 0, 1, 0, 0],
                vec![0, 1, 1, 0, 1],
            ],
            2,
        )
        .unwrap();
        let coeffs = VarCoefficients::identity_dynamics(2, 1);
        let seed = empirical_centroids(&panel, &part)
            .unwrap()
            .truncated(2)
            .unwrap();
        let updated = update_centroids(&panel, &part, &coeffs, &seed).unwrap();
        // With c = 0 and A = I, slice s must equal the class means of X_{s+1}.
        let emp = empirical_centroids(&panel, &part).unwrap();
        for s in 0..2 {
            for g in 0..2 {
                for v in 0..2 {
                    let got = updated.value(g, v, s);
                    let want = emp.value(g, v, s + 1);
                    assert!(
                        (got - want).abs() < 1e-12,
                        "s={s} g={g} v={v}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn centroid_update_recovers_generating_values_without_noise() {
        let (panel, part, truth, coeffs) = exact_instance();
        // Start from garbage; one update with the true coefficients and
        // partition must reproduce the generating centroids.
        let junk = CentroidSequence::new(vec![Mat::zeros(2, 2); 2]).unwrap();
        let updated = update_centroids(&panel, &part, &coeffs, &junk).unwrap();
        for s in 0..2 {
            for g in 0..2 {
                for v in 0..2 {
                    let got = updated.value(g, v, s);
                    let want = truth.value(g, v, s);
                    assert!(
                        (got - want).abs() < 1e-8,
                        "s={s} g={g} v={v}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn coefficient_update_recovers_exact_law() {
        let (panel, part, centroids, truth) = exact_instance();
        let fitted = update_coefficients(&panel, &part, &centroids, 1).unwrap();
        for v in 0..2 {
            assert!((fitted.intercept()[v] - truth.intercept()[v]).abs() < 1e-8);
            for k in 0..2 {
                let got = fitted.lag_matrix(0).get(v, k);
                let want = truth.lag_matrix(0).get(v, k);
                assert!((got - want).abs() < 1e-8, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn constant_centroids_are_reproduced_with_zero_residual() {
        // Distinct constant centroids; observations sit exactly on them.
        let c = Mat::from_rows(2, 2, &[0.0, 1.0, 3.0, -2.0]);
        let slices = vec![c.clone(); 4];
        let centroids = CentroidSequence::new(slices[..3].to_vec()).unwrap();
        let part = PartitionSequence::new(vec![vec![0, 1, 0, 1]; 4], 2).unwrap();
        let panel = LongitudinalPanel::from_fn(4, 2, 4, |i, v, _| c.get(i % 2, v)).unwrap();
        let fitted = update_coefficients(&panel, &part, &centroids, 1).unwrap();
        // Fitted values must reproduce the constants exactly.
        for g in 0..2 {
            let pred = fitted.predict_one(&[centroids.centroid(g, 0)]);
            for v in 0..2 {
                assert!(
                    (pred[v] - c.get(g, v)).abs() < 1e-9,
                    "{:?} vs row {g}",
                    pred
                );
            }
        }
        let f = objective(&panel, &part, &centroids, &fitted).unwrap();
        assert!(f < 1e-18, "residual {f}");
    }

    #[test]
    fn partition_update_is_nearest_and_breaks_ties_low() {
        let panel = LongitudinalPanel::new(
            vec![
                Mat::from_rows(2, 2, &[1.0, 1.0, 9.0, 9.0]),
                Mat::from_rows(2, 2, &[1.0, 1.0, 5.0, 5.0]),
            ],
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into()],
            vec![1.0, 2.0],
        )
        .unwrap();
        // Model centroids chosen so predictions at t=1 are (0,0) and (10,10).
        let centroids =
            CentroidSequence::new(vec![Mat::from_rows(2, 2, &[0.0, 0.0, 10.0, 10.0])]).unwrap();
        let coeffs = VarCoefficients::identity_dynamics(2, 1);
        let part = update_partition(&panel, &centroids, &coeffs).unwrap();
        // Unit at (1,1) goes to the near cluster; unit at (5,5) is exactly
        // equidistant and must take the lower index.
        assert_eq!(part.label(0, 1), 0);
        assert_eq!(part.label(1, 1), 0);
        // Static slice t=0 assigns by the same-time model centroids.
        assert_eq!(part.label(0, 0), 0);
        assert_eq!(part.label(1, 0), 1);
    }

    #[test]
    fn partition_update_matches_exhaustive_argmin() {
        let panel = LongitudinalPanel::from_fn(6, 2, 4, |i, v, t| {
            libm::sin((i * 5 + v * 3 + t * 11 + 1) as f64) * 2.0
        })
        .unwrap();
        let centroids = CentroidSequence::new(
            (0..3)
                .map(|s| Mat::from_fn(3, 2, |g, v| libm::cos((s * 7 + g * 2 + v) as f64)))
                .collect(),
        )
        .unwrap();
        let coeffs = VarCoefficients::new(
            vec![0.1, 0.3],
            vec![Mat::from_rows(2, 2, &[0.6, -0.2, 0.1, 0.8])],
        )
        .unwrap();
        let part = update_partition(&panel, &centroids, &coeffs).unwrap();
        for t in 1..4 {
            let pred = coeffs.predict_centroids(&[centroids.slice(t - 1)]);
            for i in 0..6 {
                let mine = dist_sq(panel.observation(i, t), pred.row(part.label(i, t)));
                for g in 0..3 {
                    let other = dist_sq(panel.observation(i, t), pred.row(g));
                    assert!(mine <= other + 1e-15, "t={t} i={i}: {mine} > {other}");
                }
            }
        }
    }

    #[test]
    fn trace_is_monotone_and_fit_converges() {
        let panel = LongitudinalPanel::from_fn(12, 2, 5, |i, v, t| {
            let base = if i < 6 { 0.0 } else { 5.0 };
            base + libm::sin((i * 31 + v * 17 + t * 7) as f64) * 0.3
        })
        .unwrap();
        let config = FitConfig::new(2, 1).with_seed(11);
        let result = fit(&panel, &config).unwrap();
        assert!(result.converged);
        assert!(result.objective >= 0.0);
        for w in result.objective_trace.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-9 * w[0].max(1.0),
                "trace increased: {} -> {}",
                w[0],
                w[1]
            );
        }
        assert_eq!(result.static_times, vec![0]);
    }

    #[test]
    fn single_cluster_fit_tracks_global_means() {
        let panel = LongitudinalPanel::from_fn(8, 2, 5, |i, v, t| {
            (t as f64) * 0.5 + libm::sin((i * 13 + v * 29) as f64)
        })
        .unwrap();
        let config = FitConfig::new(1, 1).with_seed(3).with_restarts(1);
        let result = fit_multistart(&panel, &config).unwrap();
        // All-ones partition.
        for t in 0..5 {
            for i in 0..8 {
                assert_eq!(result.partition.label(i, t), 0);
            }
        }
        // Predicted centroids coincide with the per-time global means, so the
        // objective equals the within-time scatter about those means.
        let mut scatter = 0.0;
        for t in 1..5 {
            let mean = panel.grand_mean(t);
            let pred = predicted_at(&result.model_centroids, &result.coefficients, t);
            for v in 0..2 {
                assert!(
                    (pred.get(0, v) - mean[v]).abs() < 1e-7,
                    "t={t} v={v}: {} vs {}",
                    pred.get(0, v),
                    mean[v]
                );
            }
            for i in 0..8 {
                scatter += dist_sq(panel.observation(i, t), &mean);
            }
        }
        assert!((result.objective - scatter).abs() < 1e-7 * (1.0 + scatter));
    }

    #[test]
    fn multistart_single_restart_equals_fit() {
        let panel = LongitudinalPanel::from_fn(10, 2, 4, |i, v, t| {
            libm::sin((i * 3 + v * 19 + t * 5) as f64)
        })
        .unwrap();
        let config = FitConfig::new(2, 1).with_seed(21).with_restarts(1);
        let single = fit(&panel, &config).unwrap();
        let multi = fit_multistart(&panel, &config).unwrap();
        assert_eq!(single.partition, multi.partition);
        assert_eq!(single.objective.to_bits(), multi.objective.to_bits());
        assert_eq!(multi.restart_index, 0);
    }

    #[test]
    fn same_seed_fits_are_bit_identical() {
        let panel = LongitudinalPanel::from_fn(9, 2, 4, |i, v, t| {
            libm::cos((i * 23 + v * 7 + t * 3) as f64)
        })
        .unwrap();
        let config = FitConfig::new(3, 1).with_seed(5);
        let a = fit_multistart(&panel, &config).unwrap();
        let b = fit_multistart(&panel, &config).unwrap();
        assert_eq!(a.partition, b.partition);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        assert_eq!(a.restart_index, b.restart_index);
    }

    #[test]
    fn config_validation_names_the_problem() {
        let panel = LongitudinalPanel::from_fn(4, 1, 3, |i, _, t| (i + t) as f64).unwrap();
        assert!(matches!(
            FitConfig::new(0, 1).validate(&panel),
            Err(CarError::InvalidConfig(_))
        ));
        assert!(matches!(
            FitConfig::new(5, 1).validate(&panel),
            Err(CarError::InvalidConfig(_))
        ));
        // T = 3 cannot host P = 2 (needs T >= 4).
        assert!(matches!(
            FitConfig::new(2, 2).validate(&panel),
            Err(CarError::InvalidConfig(_))
        ));
        assert!(FitConfig::new(2, 1).validate(&panel).is_ok());
    }

    #[test]
    fn degenerate_coefficient_design_is_reported() {
        let panel = LongitudinalPanel::from_fn(3, 1, 2, |i, _, t| (i + t) as f64).unwrap();
        let part = PartitionSequence::trivial(3, 2);
        let centroids = CentroidSequence::new(vec![Mat::zeros(1, 1); 2]).unwrap();
        let err = update_coefficients(&panel, &part, &centroids, 2).unwrap_err();
        assert!(matches!(err, CarError::DegenerateDesign(_)));
    }
}
