//! Seeded synthetic panels with known ground truth, for estimator
//! verification.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{CarError, Result};
use crate::linalg::Mat;
use crate::panel::{CentroidSequence, LongitudinalPanel, PartitionSequence, VarCoefficients};
use crate::rng::Rng;

/// Recipe for a generated panel.
///
/// Centroid paths follow the lag law of `coefficients` from
/// `initial_centroids` (replicated over the first `P` slices when `P > 1`),
/// with Gaussian innovations of scale `noise_scale`. Memberships start
/// uniform and are resampled with probability `switch_prob` at each step;
/// observations are the member's centroid plus Gaussian noise of the same
/// scale. Output is a pure function of the recipe fields, `seed` included.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n_units: usize,
    pub n_times: usize,
    pub n_clusters: usize,
    pub coefficients: VarCoefficients,
    /// `G x J` starting centroids.
    pub initial_centroids: Mat,
    pub noise_scale: f64,
    /// Per unit-time probability of drawing a fresh uniform membership.
    pub switch_prob: f64,
    pub seed: u64,
    /// Reject lag matrices whose companion spectral radius reaches 1.
    pub require_stationary: bool,
}

/// A generated panel together with its generating truth.
#[derive(Debug, Clone)]
pub struct GeneratedPanel {
    pub panel: LongitudinalPanel,
    pub partition: PartitionSequence,
    pub coefficients: VarCoefficients,
    /// Simulated centroid paths at all `T` times.
    pub centroid_paths: CentroidSequence,
}

/// Upper estimate of the spectral radius of the VAR companion matrix via
/// normalized repeated squaring (Gelfand bound at power 1024).
fn companion_radius_bound(coeffs: &VarCoefficients) -> f64 {
    let j = coeffs.dim();
    let p = coeffs.lag_order();
    let dim = j * p;
    let mut m = Mat::zeros(dim, dim);
    for lag in 0..p {
        let a = coeffs.lag_matrix(lag);
        for r in 0..j {
            for c in 0..j {
                m.set(r, lag * j + c, a.get(r, c));
            }
        }
    }
    for r in j..dim {
        m.set(r, r - j, 1.0);
    }

    let mut log_scale = 0.0;
    let mut power = 1.0;
    for _ in 0..10 {
        let f = libm::sqrt(m.frob_sq());
        if f == 0.0 {
            return 0.0;
        }
        log_scale = 2.0 * (log_scale + libm::log(f));
        let normalized = m.scale(1.0 / f);
        m = normalized.mul(&normalized);
        power *= 2.0;
    }
    let f = libm::sqrt(m.frob_sq());
    libm::exp((libm::log(f) + log_scale) / power)
}

fn validate(spec: &SyntheticSpec) -> Result<()> {
    let j = spec.coefficients.dim();
    if spec.n_units < 2 {
        return Err(CarError::InvalidSpec("need at least two units".into()));
    }
    if spec.n_times == 0 {
        return Err(CarError::InvalidSpec("need at least one time".into()));
    }
    if spec.n_clusters == 0 || spec.n_clusters > spec.n_units {
        return Err(CarError::InvalidSpec(format!(
            "{} clusters for {} units",
            spec.n_clusters, spec.n_units
        )));
    }
    if spec.initial_centroids.rows() != spec.n_clusters || spec.initial_centroids.cols() != j {
        return Err(CarError::InvalidSpec(format!(
            "initial centroids are {}x{}, expected {}x{j}",
            spec.initial_centroids.rows(),
            spec.initial_centroids.cols(),
            spec.n_clusters
        )));
    }
    if !spec.initial_centroids.is_finite() {
        return Err(CarError::InvalidSpec("non-finite initial centroids".into()));
    }
    if !spec.noise_scale.is_finite() || spec.noise_scale < 0.0 {
        return Err(CarError::InvalidSpec(
            "noise scale must be finite and >= 0".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.switch_prob) {
        return Err(CarError::InvalidSpec(
            "switch probability must lie in [0, 1]".into(),
        ));
    }
    if spec.require_stationary {
        let radius = companion_radius_bound(&spec.coefficients);
        if radius >= 1.0 {
            return Err(CarError::InvalidSpec(format!(
                "companion spectral radius bound {radius:.4} is not below 1"
            )));
        }
    }
    Ok(())
}

/// Simulates a panel and returns it with its generating truth.
pub fn generate_panel(spec: &SyntheticSpec) -> Result<GeneratedPanel> {
    validate(spec)?;
    let g_count = spec.n_clusters;
    let j = spec.coefficients.dim();
    let p = spec.coefficients.lag_order();
    let t_count = spec.n_times;
    let mut rng = Rng::seed_from_u64(spec.seed);

    // 1. Centroid paths. The first P slices replicate the initial centroids.
    let mut paths: Vec<Mat> = Vec::with_capacity(t_count);
    for _ in 0..p.min(t_count) {
        paths.push(spec.initial_centroids.clone());
    }
    for t in p..t_count {
        let lagged: Vec<&Mat> = (1..=p).map(|lag| &paths[t - lag]).collect();
        let mut next = spec.coefficients.predict_centroids(&lagged);
        for g in 0..g_count {
            for v in 0..j {
                let w = spec.noise_scale * rng.normal();
                next.add_to(g, v, w);
            }
        }
        paths.push(next);
    }

    // 2. Memberships: uniform start, per-step resampling.
    let mut labels: Vec<Vec<usize>> = Vec::with_capacity(t_count);
    labels.push((0..spec.n_units).map(|_| rng.below(g_count)).collect());
    for t in 1..t_count {
        let prev = labels[t - 1].clone();
        let row = prev
            .into_iter()
            .map(|keep| {
                if rng.next_f64() < spec.switch_prob {
                    rng.below(g_count)
                } else {
                    keep
                }
            })
            .collect();
        labels.push(row);
    }

    // 3. Observations: member centroid plus noise.
    let slices: Vec<Mat> = (0..t_count)
        .map(|t| {
            Mat::from_fn(spec.n_units, j, |i, v| {
                paths[t].get(labels[t][i], v) + spec.noise_scale * rng.normal()
            })
        })
        .collect();

    let width = if spec.n_units >= 1000 { 4 } else { 3 };
    let panel = LongitudinalPanel::new(
        slices,
        (0..spec.n_units).map(|i| format!("u{i:0width$}")).collect(),
        (0..j).map(|v| format!("x{}", v + 1)).collect(),
        (0..t_count).map(|t| (t + 1) as f64).collect(),
    )?;
    Ok(GeneratedPanel {
        panel,
        partition: PartitionSequence::new(labels, g_count)?,
        coefficients: spec.coefficients.clone(),
        centroid_paths: CentroidSequence::new(paths)?,
    })
}
