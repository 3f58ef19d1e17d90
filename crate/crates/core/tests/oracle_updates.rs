//! Oracle checks for the three block updates: each one is compared against
//! an independently assembled least-squares (or exhaustive) solution.

#![allow(clippy::needless_range_loop)] // oracle code mirrors the matrix algebra

mod common;

use carclust_core::rng::Rng;
use carclust_core::{
    objective, update_centroids, update_coefficients, update_partition, CentroidSequence, Mat,
};
use common::*;

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Brute-force one-lag centroid solution: vectorize `min ||R - U X A'||^2`
/// over each slice and solve the explicit normal equations.
fn centroid_oracle_one_lag(
    panel: &carclust_core::LongitudinalPanel,
    part: &carclust_core::PartitionSequence,
    coeffs: &carclust_core::VarCoefficients,
) -> Vec<Mat> {
    let n = panel.n_units();
    let j = panel.n_vars();
    let g_count = part.n_clusters();
    let a = coeffs.lag_matrix(0);
    let c = coeffs.intercept();
    let mut out = Vec::new();
    for s in 0..panel.n_times() - 1 {
        let t = s + 1;
        // Design D[(i,jj)][(g,k)] = U_ig * A_{jj,k}; response r = X_t - 1 c'.
        let rows = n * j;
        let cols = g_count * j;
        let mut design = vec![vec![0.0; cols]; rows];
        let mut resp = vec![0.0; rows];
        for i in 0..n {
            let g = part.label(i, t);
            for jj in 0..j {
                let r = i * j + jj;
                resp[r] = panel.value(i, jj, t) - c[jj];
                for k in 0..j {
                    design[r][g * j + k] = a.get(jj, k);
                }
            }
        }
        // Normal equations D'D x = D'r.
        let mut dtd = vec![vec![0.0; cols]; cols];
        let mut dtr = vec![vec![0.0; 1]; cols];
        for r in 0..rows {
            for x in 0..cols {
                let dx = design[r][x];
                if dx == 0.0 {
                    continue;
                }
                dtr[x][0] += dx * resp[r];
                for y in 0..cols {
                    dtd[x][y] += dx * design[r][y];
                }
            }
        }
        let sol = gauss_solve(&dtd, &dtr);
        out.push(Mat::from_fn(g_count, j, |g, k| sol[g * j + k][0]));
    }
    out
}

#[test]
fn one_lag_centroid_update_matches_vectorized_least_squares() {
    for seed in 0..20u64 {
        let mut rng = Rng::seed_from_u64(1000 + seed);
        let n = 4 + rng.below(6);
        let j = 1 + rng.below(3);
        let t = 3 + rng.below(3);
        let g = 2 + rng.below(2);
        let panel = random_panel(&mut rng, n, j, t);
        let part = random_partition_nonempty(&mut rng, n, t, g);
        let coeffs = random_coefficients(&mut rng, j, 1);
        let seed_cents = random_centroids(&mut rng, g, j, t - 1);

        let updated = update_centroids(&panel, &part, &coeffs, &seed_cents).unwrap();
        let expect = centroid_oracle_one_lag(&panel, &part, &coeffs);
        for s in 0..t - 1 {
            for gg in 0..g {
                for v in 0..j {
                    let got = updated.value(gg, v, s);
                    let want = expect[s].get(gg, v);
                    assert!(
                        (got - want).abs() < 1e-8 * (1.0 + want.abs()),
                        "seed {seed} s={s} g={gg} v={v}: {got} vs {want}"
                    );
                }
            }
        }
    }
}

/// Independent reconstruction of the two-lag sweep: same ascending slice
/// order, but every block solved through a dense Kronecker system and
/// residuals materialized unit by unit.
fn centroid_oracle_two_lag_sweep(
    panel: &carclust_core::LongitudinalPanel,
    part: &carclust_core::PartitionSequence,
    coeffs: &carclust_core::VarCoefficients,
    start: &CentroidSequence,
) -> Vec<Mat> {
    let n = panel.n_units();
    let j = panel.n_vars();
    let g_count = part.n_clusters();
    let p_max = coeffs.lag_order();
    let t_count = panel.n_times();
    let c = coeffs.intercept();
    let mut work: Vec<Mat> = (0..t_count - 1).map(|s| start.slice(s).clone()).collect();

    for s in 0..t_count - 1 {
        let dim = g_count * j;
        let mut lhs = vec![vec![0.0; dim]; dim];
        let mut rhs = vec![vec![0.0; 1]; dim];
        let mut touched = false;
        for p in 1..=p_max {
            let t = s + p;
            if t < p_max || t >= t_count {
                continue;
            }
            touched = true;
            let a_p = coeffs.lag_matrix(p - 1);
            // Residual with every lag except p, per unit.
            let mut resid = Mat::zeros(n, j);
            for i in 0..n {
                let g = part.label(i, t);
                for v in 0..j {
                    let mut val = panel.value(i, v, t) - c[v];
                    for q in 1..=p_max {
                        if q == p {
                            continue;
                        }
                        let a_q = coeffs.lag_matrix(q - 1);
                        for k in 0..j {
                            val -= a_q.get(v, k) * work[t - q].get(g, k);
                        }
                    }
                    resid.set(i, v, val);
                }
            }
            // lhs[(g,k)][(g',k')] += (U'U)_{gg'} (A'A)_{kk'};
            // rhs[(g,k)] += (U' resid A_p)_{gk}.
            let counts = part.counts_at(t);
            for g in 0..g_count {
                for k in 0..j {
                    for kk in 0..j {
                        let mut gram = 0.0;
                        for row in 0..j {
                            gram += a_p.get(row, k) * a_p.get(row, kk);
                        }
                        lhs[g * j + k][g * j + kk] += counts[g] as f64 * gram;
                    }
                }
            }
            for i in 0..n {
                let g = part.label(i, t);
                for k in 0..j {
                    let mut acc = 0.0;
                    for v in 0..j {
                        acc += resid.get(i, v) * a_p.get(v, k);
                    }
                    rhs[g * j + k][0] += acc;
                }
            }
        }
        if !touched {
            continue;
        }
        let sol = gauss_solve(&lhs, &rhs);
        work[s] = Mat::from_fn(g_count, j, |g, k| sol[g * j + k][0]);
    }
    work
}

#[test]
fn two_lag_centroid_sweep_matches_dense_block_solves() {
    for seed in 0..12u64 {
        let mut rng = Rng::seed_from_u64(2000 + seed);
        let n = 5 + rng.below(5);
        let j = 1 + rng.below(2);
        let t = 4 + rng.below(3);
        let g = 2 + rng.below(2);
        let panel = random_panel(&mut rng, n, j, t);
        let part = random_partition_nonempty(&mut rng, n, t, g);
        let coeffs = random_coefficients(&mut rng, j, 2);
        let start = random_centroids(&mut rng, g, j, t - 1);

        let updated = update_centroids(&panel, &part, &coeffs, &start).unwrap();
        let expect = centroid_oracle_two_lag_sweep(&panel, &part, &coeffs, &start);
        for s in 0..t - 1 {
            for gg in 0..g {
                for v in 0..j {
                    let got = updated.value(gg, v, s);
                    let want = expect[s].get(gg, v);
                    assert!(
                        (got - want).abs() < 1e-8 * (1.0 + want.abs()),
                        "seed {seed} s={s} g={gg} v={v}: {got} vs {want}"
                    );
                }
            }
        }
    }
}

#[test]
fn centroid_sweep_never_increases_the_objective() {
    for seed in 0..15u64 {
        let mut rng = Rng::seed_from_u64(3000 + seed);
        let p = 1 + (seed % 2) as usize;
        let n = 6 + rng.below(5);
        let j = 1 + rng.below(3);
        let t = p + 3 + rng.below(3);
        let g = 2 + rng.below(3).min(n - 2);
        let panel = random_panel(&mut rng, n, j, t);
        let part = random_partition_nonempty(&mut rng, n, t, g);
        let coeffs = random_coefficients(&mut rng, j, p);
        let start = random_centroids(&mut rng, g, j, t - 1);

        let before = objective(&panel, &part, &start, &coeffs).unwrap();
        let updated = update_centroids(&panel, &part, &coeffs, &start).unwrap();
        let after = objective(&panel, &part, &updated, &coeffs).unwrap();
        assert!(
            after <= before + 1e-9 * before.max(1.0),
            "seed {seed}: {before} -> {after}"
        );
    }
}

/// Stacked regression oracle: materialize every (unit, time) row of the
/// coefficient regression and solve its normal equations directly.
fn coefficient_oracle(
    panel: &carclust_core::LongitudinalPanel,
    part: &carclust_core::PartitionSequence,
    centroids: &CentroidSequence,
    p_max: usize,
) -> Vec<Vec<f64>> {
    let j = panel.n_vars();
    let width = j * p_max + 1;
    let mut ztz = vec![vec![0.0; width]; width];
    let mut zty = vec![vec![0.0; j]; width];
    for t in p_max..panel.n_times() {
        for i in 0..panel.n_units() {
            let g = part.label(i, t);
            let mut z = vec![1.0];
            for p in 1..=p_max {
                z.extend_from_slice(centroids.centroid(g, t - p));
            }
            for r in 0..width {
                for c in 0..width {
                    ztz[r][c] += z[r] * z[c];
                }
                for v in 0..j {
                    zty[r][v] += z[r] * panel.value(i, v, t);
                }
            }
        }
    }
    gauss_solve(&ztz, &zty) // width x J, the transposed stacked coefficients
}

#[test]
fn coefficient_update_matches_stacked_regression_oracle() {
    for seed in 0..20u64 {
        let mut rng = Rng::seed_from_u64(4000 + seed);
        let p = 1 + (seed % 2) as usize;
        let n = 5 + rng.below(5);
        let j = 1 + rng.below(2);
        let t = p + 3 + rng.below(3);
        let g = 2 + rng.below(2);
        let panel = random_panel(&mut rng, n, j, t);
        let part = random_partition_nonempty(&mut rng, n, t, g);
        let centroids = random_centroids(&mut rng, g, j, t - 1);

        let fitted = update_coefficients(&panel, &part, &centroids, p).unwrap();
        let expect = coefficient_oracle(&panel, &part, &centroids, p);
        let stacked = fitted.stacked();
        for r in 0..j {
            for c in 0..j * p + 1 {
                let got = stacked.get(r, c);
                let want = expect[c][r];
                assert!(
                    (got - want).abs() < 1e-8 * (1.0 + want.abs()),
                    "seed {seed} ({r},{c}): {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn coefficient_update_satisfies_normal_equations() {
    for seed in 0..20u64 {
        let mut rng = Rng::seed_from_u64(5000 + seed);
        let p = 1 + (seed % 2) as usize;
        let n = 5 + rng.below(6);
        let j = 1 + rng.below(3);
        let t = p + 3 + rng.below(3);
        let g = 2 + rng.below(2);
        let panel = random_panel(&mut rng, n, j, t);
        let part = random_partition_nonempty(&mut rng, n, t, g);
        let centroids = random_centroids(&mut rng, g, j, t - 1);

        let fitted = update_coefficients(&panel, &part, &centroids, p).unwrap();
        // Residual of sum_t Z'Z B' - Z'Y, assembled row by row.
        let width = j * p + 1;
        let mut ztz = vec![vec![0.0; width]; width];
        let mut zty = vec![vec![0.0; j]; width];
        for t_obs in p..t {
            for i in 0..n {
                let g_i = part.label(i, t_obs);
                let mut z = vec![1.0];
                for lag in 1..=p {
                    z.extend_from_slice(centroids.centroid(g_i, t_obs - lag));
                }
                for r in 0..width {
                    for c in 0..width {
                        ztz[r][c] += z[r] * z[c];
                    }
                    for v in 0..j {
                        zty[r][v] += z[r] * panel.value(i, v, t_obs);
                    }
                }
            }
        }
        let stacked = fitted.stacked();
        let mut resid_sq = 0.0;
        let mut rhs_sq = 0.0;
        for r in 0..width {
            for v in 0..j {
                let mut lhs = 0.0;
                for c in 0..width {
                    lhs += ztz[r][c] * stacked.get(v, c);
                }
                let d = lhs - zty[r][v];
                resid_sq += d * d;
                rhs_sq += zty[r][v] * zty[r][v];
            }
        }
        assert!(
            resid_sq.sqrt() <= 1e-8 * rhs_sq.sqrt().max(1.0),
            "seed {seed}: normal-equation residual {} vs rhs {}",
            resid_sq.sqrt(),
            rhs_sq.sqrt()
        );
    }
}

#[test]
fn partition_update_matches_per_unit_enumeration() {
    for seed in 0..20u64 {
        let mut rng = Rng::seed_from_u64(6000 + seed);
        let p = 1 + (seed % 2) as usize;
        let n = 4 + rng.below(8);
        let j = 1 + rng.below(3);
        let t = p + 3 + rng.below(3);
        let g = 2 + rng.below(3).min(n - 2);
        let panel = random_panel(&mut rng, n, j, t);
        let centroids = random_centroids(&mut rng, g, j, t - 1);
        let coeffs = random_coefficients(&mut rng, j, p);

        let part = update_partition(&panel, &centroids, &coeffs).unwrap();
        for t_obs in 0..t {
            // Reference points rebuilt from scratch.
            let refs: Vec<Vec<f64>> = (0..g)
                .map(|gg| {
                    if t_obs < p {
                        centroids.centroid(gg, t_obs).to_vec()
                    } else {
                        let lagged: Vec<&[f64]> = (1..=p)
                            .map(|lag| centroids.centroid(gg, t_obs - lag))
                            .collect();
                        coeffs.predict_one(&lagged)
                    }
                })
                .collect();
            for i in 0..n {
                let x = panel.observation(i, t_obs);
                let mut best = 0;
                let mut best_d = dist_sq(x, &refs[0]);
                for (gg, r) in refs.iter().enumerate().skip(1) {
                    let d = dist_sq(x, r);
                    if d < best_d {
                        best_d = d;
                        best = gg;
                    }
                }
                assert_eq!(part.label(i, t_obs), best, "seed {seed} t={t_obs} i={i}");
            }
        }
    }
}
