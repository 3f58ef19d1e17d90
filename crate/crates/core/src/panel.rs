//! Three-way panel data model: observations, partitions, centroids and
//! autoregressive coefficients.
//!
//! Storage is time-major (a `T`-sequence of per-time matrices) so the
//! per-time block updates of the estimator touch contiguous data. Partitions
//! are stored as one label per unit-time pair, which makes the one-cluster-
//! per-row invariant structural instead of checked.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CarError, Result};
use crate::linalg::Mat;

/// A balanced panel: `n` units observed on `J` variables at `T` times.
///
/// Immutable after construction; shared read-only across fit restarts.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalPanel {
    slices: Vec<Mat>, // T matrices, each n x J
    unit_ids: Vec<String>,
    var_names: Vec<String>,
    time_points: Vec<f64>,
}

impl LongitudinalPanel {
    /// Builds a panel from per-time observation matrices (each `n x J`).
    ///
    /// Requires `n >= 2`, `J >= 1`, `T >= 1`, finite values, unique unit and
    /// variable names and strictly increasing time points. Missing entries
    /// are rejected by shape: every slice must be fully populated.
    pub fn new(
        slices: Vec<Mat>,
        unit_ids: Vec<String>,
        var_names: Vec<String>,
        time_points: Vec<f64>,
    ) -> Result<Self> {
        let t = slices.len();
        if t == 0 {
            return Err(CarError::InvalidInput(
                "panel needs at least one time point".into(),
            ));
        }
        if time_points.len() != t {
            return Err(CarError::InvalidInput(format!(
                "{} time labels for {} time slices",
                time_points.len(),
                t
            )));
        }
        let n = slices[0].rows();
        let j = slices[0].cols();
        if n < 2 {
            return Err(CarError::InvalidInput(
                "panel needs at least two units".into(),
            ));
        }
        if j == 0 {
            return Err(CarError::InvalidInput(
                "panel needs at least one variable".into(),
            ));
        }
        if unit_ids.len() != n {
            return Err(CarError::InvalidInput(format!(
                "{} unit ids for {} units",
                unit_ids.len(),
                n
            )));
        }
        if var_names.len() != j {
            return Err(CarError::InvalidInput(format!(
                "{} variable names for {} variables",
                var_names.len(),
                j
            )));
        }
        for (t_idx, s) in slices.iter().enumerate() {
            if s.rows() != n || s.cols() != j {
                return Err(CarError::InvalidInput(format!(
                    "slice {t_idx} is {}x{}, expected {n}x{j}",
                    s.rows(),
                    s.cols()
                )));
            }
            if !s.is_finite() {
                return Err(CarError::InvalidInput(format!(
                    "non-finite observation at time {t_idx}"
                )));
            }
        }
        if time_points.iter().any(|t| !t.is_finite()) {
            return Err(CarError::InvalidInput("time labels must be finite".into()));
        }
        for w in time_points.windows(2) {
            if w[1] <= w[0] {
                return Err(CarError::InvalidInput(
                    "time labels must be strictly increasing".into(),
                ));
            }
        }
        if has_duplicates(&unit_ids) {
            return Err(CarError::InvalidInput("unit ids must be unique".into()));
        }
        if has_duplicates(&var_names) {
            return Err(CarError::InvalidInput(
                "variable names must be unique".into(),
            ));
        }
        Ok(LongitudinalPanel {
            slices,
            unit_ids,
            var_names,
            time_points,
        })
    }

    /// Convenience constructor with generated labels and values given by
    /// `f(unit, variable, time)`.
    pub fn from_fn(
        n: usize,
        j: usize,
        t: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let slices = (0..t)
            .map(|time| Mat::from_fn(n, j, |i, v| f(i, v, time)))
            .collect();
        LongitudinalPanel::new(
            slices,
            (0..n).map(|i| format!("u{i:03}")).collect(),
            (0..j).map(|v| format!("x{}", v + 1)).collect(),
            (0..t).map(|time| (time + 1) as f64).collect(),
        )
    }

    pub fn n_units(&self) -> usize {
        self.slices[0].rows()
    }

    pub fn n_vars(&self) -> usize {
        self.slices[0].cols()
    }

    pub fn n_times(&self) -> usize {
        self.slices.len()
    }

    /// Observation matrix (`n x J`) at time `t`.
    pub fn slice(&self, t: usize) -> &Mat {
        &self.slices[t]
    }

    pub fn value(&self, unit: usize, var: usize, t: usize) -> f64 {
        self.slices[t].get(unit, var)
    }

    /// The `J`-vector observed for `unit` at time `t`.
    pub fn observation(&self, unit: usize, t: usize) -> &[f64] {
        self.slices[t].row(unit)
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn time_points(&self) -> &[f64] {
        &self.time_points
    }

    /// Index of a unit id, if present.
    pub fn unit_index(&self, id: &str) -> Option<usize> {
        self.unit_ids.iter().position(|u| u == id)
    }

    /// Grand mean vector over all units at time `t`.
    pub fn grand_mean(&self, t: usize) -> Vec<f64> {
        let s = &self.slices[t];
        let n = s.rows() as f64;
        let mut mean = vec![0.0; s.cols()];
        for i in 0..s.rows() {
            for (m, v) in mean.iter_mut().zip(s.row(i)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        mean
    }
}

fn has_duplicates(items: &[String]) -> bool {
    for (k, a) in items.iter().enumerate() {
        if items[k + 1..].iter().any(|b| b == a) {
            return true;
        }
    }
    false
}

/// A hard partition of the units for each time: one cluster per unit-time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSequence {
    labels: Vec<Vec<usize>>, // labels[t][i] in 0..G
    n_clusters: usize,
}

impl PartitionSequence {
    /// Builds a partition from per-time label vectors (`labels[t][i]`).
    pub fn new(labels: Vec<Vec<usize>>, n_clusters: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(CarError::InvalidInput(
                "partition needs at least one time point".into(),
            ));
        }
        if n_clusters == 0 {
            return Err(CarError::InvalidInput(
                "partition needs at least one cluster".into(),
            ));
        }
        let n = labels[0].len();
        if n_clusters > n {
            return Err(CarError::InvalidInput(format!(
                "{n_clusters} clusters exceed {n} units"
            )));
        }
        for (t, row) in labels.iter().enumerate() {
            if row.len() != n {
                return Err(CarError::InvalidInput(format!(
                    "time {t} labels {} units, expected {n}",
                    row.len()
                )));
            }
            if let Some(&bad) = row.iter().find(|&&g| g >= n_clusters) {
                return Err(CarError::InvalidInput(format!(
                    "label {bad} at time {t} exceeds cluster count {n_clusters}"
                )));
            }
        }
        Ok(PartitionSequence { labels, n_clusters })
    }

    /// All units in one cluster at every time.
    pub fn trivial(n_units: usize, n_times: usize) -> Self {
        PartitionSequence {
            labels: vec![vec![0; n_units]; n_times],
            n_clusters: 1,
        }
    }

    pub fn n_units(&self) -> usize {
        self.labels[0].len()
    }

    pub fn n_times(&self) -> usize {
        self.labels.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    /// Cluster of `unit` at time `t`.
    pub fn label(&self, unit: usize, t: usize) -> usize {
        self.labels[t][unit]
    }

    pub fn set_label(&mut self, unit: usize, t: usize, cluster: usize) {
        debug_assert!(cluster < self.n_clusters);
        self.labels[t][unit] = cluster;
    }

    pub fn is_member(&self, unit: usize, cluster: usize, t: usize) -> bool {
        self.labels[t][unit] == cluster
    }

    /// Label vector at time `t`.
    pub fn labels_at(&self, t: usize) -> &[usize] {
        &self.labels[t]
    }

    /// Member counts per cluster at time `t`.
    pub fn counts_at(&self, t: usize) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_clusters];
        for &g in &self.labels[t] {
            counts[g] += 1;
        }
        counts
    }

    /// Units belonging to `cluster` at time `t`.
    pub fn members(&self, cluster: usize, t: usize) -> Vec<usize> {
        self.labels[t]
            .iter()
            .enumerate()
            .filter(|(_, &g)| g == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    /// First `(cluster, time)` pair with no members, if any.
    pub fn first_empty_cluster(&self) -> Option<(usize, usize)> {
        for t in 0..self.n_times() {
            let counts = self.counts_at(t);
            if let Some(g) = counts.iter().position(|&c| c == 0) {
                return Some((g, t));
            }
        }
        None
    }

    /// Relabels clusters by `perm`, where `perm[g]` is the new label of `g`.
    pub fn relabel_clusters(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_clusters {
            return Err(CarError::InvalidInput("permutation length mismatch".into()));
        }
        let labels = self
            .labels
            .iter()
            .map(|row| row.iter().map(|&g| perm[g]).collect())
            .collect();
        PartitionSequence::new(labels, self.n_clusters)
    }

    /// Reorders units by `perm`, where new unit `i` is old unit `perm[i]`.
    pub fn reorder_units(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_units() {
            return Err(CarError::InvalidInput(
                "unit permutation length mismatch".into(),
            ));
        }
        let labels = self
            .labels
            .iter()
            .map(|row| perm.iter().map(|&old| row[old]).collect())
            .collect();
        PartitionSequence::new(labels, self.n_clusters)
    }
}

/// Per-cluster, per-time member counts (`G x T`).
pub fn cluster_sizes(part: &PartitionSequence) -> Vec<Vec<usize>> {
    let g = part.n_clusters();
    let t = part.n_times();
    let mut sizes = vec![vec![0usize; t]; g];
    for time in 0..t {
        for &label in part.labels_at(time) {
            sizes[label][time] += 1;
        }
    }
    sizes
}

/// A time sequence of centroid matrices (`G x J` each), starting at time 0.
///
/// Two flavors share the type: model centroids (the fitted autoregressive
/// parameters, `T - 1` slices) and empirical centroids (per-time class means,
/// `T` slices).
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSequence {
    slices: Vec<Mat>,
}

impl CentroidSequence {
    pub fn new(slices: Vec<Mat>) -> Result<Self> {
        if slices.is_empty() {
            return Err(CarError::InvalidInput("centroid sequence is empty".into()));
        }
        let (g, j) = (slices[0].rows(), slices[0].cols());
        for (t, s) in slices.iter().enumerate() {
            if s.rows() != g || s.cols() != j {
                return Err(CarError::DimensionMismatch(format!(
                    "centroid slice {t} is {}x{}, expected {g}x{j}",
                    s.rows(),
                    s.cols()
                )));
            }
            if !s.is_finite() {
                return Err(CarError::InvalidInput(format!(
                    "non-finite centroid at time {t}"
                )));
            }
        }
        Ok(CentroidSequence { slices })
    }

    pub fn n_times(&self) -> usize {
        self.slices.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.slices[0].rows()
    }

    pub fn n_vars(&self) -> usize {
        self.slices[0].cols()
    }

    /// Centroid matrix (`G x J`) at time `t`.
    pub fn slice(&self, t: usize) -> &Mat {
        &self.slices[t]
    }

    pub fn value(&self, cluster: usize, var: usize, t: usize) -> f64 {
        self.slices[t].get(cluster, var)
    }

    /// Centroid vector of `cluster` at time `t`.
    pub fn centroid(&self, cluster: usize, t: usize) -> &[f64] {
        self.slices[t].row(cluster)
    }

    /// Drops trailing slices, keeping the first `keep` times.
    pub fn truncated(&self, keep: usize) -> Result<Self> {
        if keep == 0 || keep > self.slices.len() {
            return Err(CarError::InvalidInput(
                "truncation length out of range".into(),
            ));
        }
        CentroidSequence::new(self.slices[..keep].to_vec())
    }
}

/// Intercept and lag matrices of the centroid autoregression.
#[derive(Debug, Clone, PartialEq)]
pub struct VarCoefficients {
    intercept: Vec<f64>,    // length J
    lag_matrices: Vec<Mat>, // P matrices, J x J
}

impl VarCoefficients {
    pub fn new(intercept: Vec<f64>, lag_matrices: Vec<Mat>) -> Result<Self> {
        let j = intercept.len();
        if j == 0 {
            return Err(CarError::InvalidInput(
                "coefficient dimension is zero".into(),
            ));
        }
        if lag_matrices.is_empty() {
            return Err(CarError::InvalidInput(
                "lag order must be at least one".into(),
            ));
        }
        if intercept.iter().any(|v| !v.is_finite()) {
            return Err(CarError::InvalidInput("non-finite intercept".into()));
        }
        for (p, a) in lag_matrices.iter().enumerate() {
            if a.rows() != j || a.cols() != j {
                return Err(CarError::DimensionMismatch(format!(
                    "lag matrix {} is {}x{}, expected {j}x{j}",
                    p + 1,
                    a.rows(),
                    a.cols()
                )));
            }
            if !a.is_finite() {
                return Err(CarError::InvalidInput(format!(
                    "non-finite lag matrix {}",
                    p + 1
                )));
            }
        }
        Ok(VarCoefficients {
            intercept,
            lag_matrices,
        })
    }

    /// Identity dynamics: zero intercept, first lag identity, higher lags zero.
    pub fn identity_dynamics(j: usize, lag_order: usize) -> Self {
        let mut lags = vec![Mat::identity(j)];
        for _ in 1..lag_order {
            lags.push(Mat::zeros(j, j));
        }
        VarCoefficients {
            intercept: vec![0.0; j],
            lag_matrices: lags,
        }
    }

    pub fn dim(&self) -> usize {
        self.intercept.len()
    }

    pub fn lag_order(&self) -> usize {
        self.lag_matrices.len()
    }

    pub fn intercept(&self) -> &[f64] {
        &self.intercept
    }

    pub fn lag_matrix(&self, p: usize) -> &Mat {
        &self.lag_matrices[p]
    }

    /// Stacked form `[c, A_1, ..., A_P]`, a `J x (J*P + 1)` matrix.
    pub fn stacked(&self) -> Mat {
        let j = self.dim();
        let p = self.lag_order();
        Mat::from_fn(j, j * p + 1, |r, c| {
            if c == 0 {
                self.intercept[r]
            } else {
                let lag = (c - 1) / j;
                self.lag_matrices[lag].get(r, (c - 1) % j)
            }
        })
    }

    /// Splits a stacked `J x (J*P + 1)` matrix back into intercept and lags.
    pub fn from_stacked(stacked: &Mat, lag_order: usize) -> Result<Self> {
        let j = stacked.rows();
        if stacked.cols() != j * lag_order + 1 {
            return Err(CarError::DimensionMismatch(format!(
                "stacked matrix is {}x{}, expected {j}x{}",
                stacked.rows(),
                stacked.cols(),
                j * lag_order + 1
            )));
        }
        let intercept = (0..j).map(|r| stacked.get(r, 0)).collect();
        let lags = (0..lag_order)
            .map(|p| Mat::from_fn(j, j, |r, c| stacked.get(r, 1 + p * j + c)))
            .collect();
        VarCoefficients::new(intercept, lags)
    }

    /// Predicted centroid matrix `1 c' + sum_p lagged[p-1] A_p'` where
    /// `lagged[p-1]` holds the centroids `p` steps back (`G x J`).
    pub fn predict_centroids(&self, lagged: &[&Mat]) -> Mat {
        assert_eq!(lagged.len(), self.lag_order(), "one lagged slice per lag");
        let g = lagged[0].rows();
        let j = self.dim();
        let mut out = Mat::from_fn(g, j, |_, c| self.intercept[c]);
        for (a, x) in self.lag_matrices.iter().zip(lagged) {
            debug_assert_eq!(x.cols(), j);
            // out += x * a'
            for row in 0..g {
                for c in 0..j {
                    let mut acc = 0.0;
                    for k in 0..j {
                        acc += x.get(row, k) * a.get(c, k);
                    }
                    out.add_to(row, c, acc);
                }
            }
        }
        out
    }

    /// Predicted centroid vector for one cluster from its lagged centroids.
    pub fn predict_one(&self, lagged: &[&[f64]]) -> Vec<f64> {
        let j = self.dim();
        let mut out = self.intercept.clone();
        for (a, x) in self.lag_matrices.iter().zip(lagged) {
            for c in 0..j {
                let mut acc = 0.0;
                for k in 0..j {
                    acc += a.get(c, k) * x[k];
                }
                out[c] += acc;
            }
        }
        out
    }
}

/// Per-time class-conditional means of the panel under a partition.
///
/// Covers all `T` times; this is the reporting summary, not the fitted
/// autoregressive parameter sequence.
pub fn empirical_centroids(
    panel: &LongitudinalPanel,
    part: &PartitionSequence,
) -> Result<CentroidSequence> {
    check_panel_partition(panel, part)?;
    let g = part.n_clusters();
    let j = panel.n_vars();
    let mut slices = Vec::with_capacity(panel.n_times());
    for t in 0..panel.n_times() {
        let counts = part.counts_at(t);
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(CarError::EmptyCluster {
                cluster: empty,
                time: t,
            });
        }
        let mut sums = Mat::zeros(g, j);
        for i in 0..panel.n_units() {
            let cluster = part.label(i, t);
            for (v, x) in panel.observation(i, t).iter().enumerate() {
                sums.add_to(cluster, v, *x);
            }
        }
        for cluster in 0..g {
            let inv = 1.0 / counts[cluster] as f64;
            for v in 0..j {
                sums.set(cluster, v, sums.get(cluster, v) * inv);
            }
        }
        slices.push(sums);
    }
    CentroidSequence::new(slices)
}

pub(crate) fn check_panel_partition(
    panel: &LongitudinalPanel,
    part: &PartitionSequence,
) -> Result<()> {
    if part.n_units() != panel.n_units() || part.n_times() != panel.n_times() {
        return Err(CarError::DimensionMismatch(format!(
            "partition is {} units x {} times, panel is {} x {}",
            part.n_units(),
            part.n_times(),
            panel.n_units(),
            panel.n_times()
        )));
    }
    Ok(())
}
