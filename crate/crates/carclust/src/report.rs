//! Fit reports: one object, two renderings (human text and a machine
//! key-value tree).
//!
//! The tree rendering is JSON with a fixed top-level key set — `config`,
//! `fit`, `centroids_model`, `centroids_empirical`, `coefficients`,
//! `ch_table`, `transitions`, `shares` — which downstream consumers may rely
//! on. Every float is rounded to 6 significant digits at build time, so a
//! written report re-parses to exactly the numbers it displays. Clusters are
//! labeled `1..G` in reports (the API is 0-based).

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use carclust_core::diagnostics::{membership_shares, transition_matrix};
use carclust_core::{CHReport, FitResult, LongitudinalPanel};
use serde::{Deserialize, Serialize};

use crate::csv_io::DataError;

/// Report rendering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Human-readable tables.
    Text,
    /// Machine-readable key-value tree (JSON).
    Tree,
}

/// Rounds to 6 significant digits.
pub fn round_sig(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.5e}").parse().unwrap_or(v)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub command: String,
    pub input: String,
    pub clusters: String,
    pub lags: usize,
    pub restarts: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iters: usize,
    pub normalize: bool,
    pub init: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MembershipRow {
    pub unit: String,
    /// Cluster label (1-based) per time, in time order.
    pub clusters: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSection {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restart_index: usize,
    /// Time labels whose assignments are outside the objective.
    pub static_times: Vec<String>,
    pub memberships: Vec<MembershipRow>,
}

/// Centroid values as `values[time][cluster][variable]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CentroidTable {
    pub times: Vec<String>,
    pub clusters: Vec<String>,
    pub variables: Vec<String>,
    pub values: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientsSection {
    pub intercept: Vec<f64>,
    /// `lag_matrices[p][row][col]` is the lag `p + 1` matrix.
    pub lag_matrices: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChRow {
    pub clusters: usize,
    pub ch: f64,
    pub objective: f64,
    pub trace_w: f64,
    pub trace_b: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChTable {
    pub candidates: Vec<ChRow>,
    pub selected_g: usize,
    pub failures: Vec<ChFailure>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChFailure {
    pub clusters: usize,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionSection {
    pub clusters: Vec<String>,
    pub counts: Vec<Vec<usize>>,
    /// Row-stochastic except for flagged never-occupied source rows.
    pub probs: Vec<Vec<f64>>,
    pub n_transitions: usize,
    pub empty_rows: Vec<bool>,
}

/// The single report object behind both renderings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub config: ConfigEcho,
    pub fit: FitSection,
    pub centroids_model: CentroidTable,
    pub centroids_empirical: CentroidTable,
    pub coefficients: CoefficientsSection,
    /// Absent (`null`) when no cluster-count sweep was run.
    pub ch_table: Option<ChTable>,
    pub transitions: TransitionSection,
    pub shares: Vec<f64>,
}

fn centroid_table(
    panel: &LongitudinalPanel,
    centroids: &carclust_core::CentroidSequence,
) -> CentroidTable {
    let g = centroids.n_clusters();
    CentroidTable {
        times: (0..centroids.n_times())
            .map(|t| format!("{}", panel.time_points()[t]))
            .collect(),
        clusters: (1..=g).map(|k| k.to_string()).collect(),
        variables: panel.var_names().to_vec(),
        values: (0..centroids.n_times())
            .map(|t| {
                (0..g)
                    .map(|cluster| {
                        (0..centroids.n_vars())
                            .map(|v| round_sig(centroids.value(cluster, v, t)))
                            .collect()
                    })
                    .collect()
            })
            .collect(),
    }
}

/// Assembles the full report for a fit (plus an optional selection sweep).
pub fn build_report(
    panel: &LongitudinalPanel,
    fit: &FitResult,
    ch: Option<&CHReport>,
    config: ConfigEcho,
) -> Result<Report, DataError> {
    let g = fit.partition.n_clusters();
    let tm = transition_matrix(&fit.partition)?;
    let shares = membership_shares(&fit.partition);
    let coeffs = &fit.coefficients;
    let j = coeffs.dim();

    Ok(Report {
        config,
        fit: FitSection {
            objective: round_sig(fit.objective),
            iterations: fit.iterations,
            converged: fit.converged,
            restart_index: fit.restart_index,
            static_times: fit
                .static_times
                .iter()
                .map(|&t| format!("{}", panel.time_points()[t]))
                .collect(),
            memberships: panel
                .unit_ids()
                .iter()
                .enumerate()
                .map(|(i, unit)| MembershipRow {
                    unit: unit.clone(),
                    clusters: (0..panel.n_times())
                        .map(|t| fit.partition.label(i, t) + 1)
                        .collect(),
                })
                .collect(),
        },
        centroids_model: centroid_table(panel, &fit.model_centroids),
        centroids_empirical: centroid_table(panel, &fit.empirical_centroids),
        coefficients: CoefficientsSection {
            intercept: coeffs.intercept().iter().map(|&v| round_sig(v)).collect(),
            lag_matrices: (0..coeffs.lag_order())
                .map(|p| {
                    (0..j)
                        .map(|r| {
                            (0..j)
                                .map(|c| round_sig(coeffs.lag_matrix(p).get(r, c)))
                                .collect()
                        })
                        .collect()
                })
                .collect(),
        },
        ch_table: ch.map(|report| ChTable {
            candidates: report
                .candidates
                .iter()
                .map(|c| ChRow {
                    clusters: c.g,
                    ch: round_sig(c.ch_value),
                    objective: round_sig(c.objective),
                    trace_w: round_sig(c.trace_w),
                    trace_b: round_sig(c.trace_b),
                })
                .collect(),
            selected_g: report.selected_g,
            failures: report
                .failures
                .iter()
                .map(|(g, e)| ChFailure {
                    clusters: *g,
                    error: e.to_string(),
                })
                .collect(),
        }),
        transitions: TransitionSection {
            clusters: (1..=g).map(|k| k.to_string()).collect(),
            counts: tm.counts.clone(),
            probs: (0..g)
                .map(|a| (0..g).map(|b| round_sig(tm.probs.get(a, b))).collect())
                .collect(),
            n_transitions: tm.n_transitions,
            empty_rows: tm.empty_rows.clone(),
        },
        shares: shares.into_iter().map(round_sig).collect(),
    })
}

/// JSON rendering of the tree format.
pub fn to_tree_string(report: &Report) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn fmt_num(v: f64) -> String {
    let r = round_sig(v);
    if r == 0.0 || (r.abs() >= 1e-4 && r.abs() < 1e7) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

/// Plain-text rendering.
pub fn to_text_string(report: &Report) -> String {
    let mut out = String::new();
    let c = &report.config;
    let _ = writeln!(out, "carclust report");
    let _ = writeln!(out, "===============");
    let _ = writeln!(
        out,
        "command: {} | input: {} | clusters: {} | lags: {}",
        c.command, c.input, c.clusters, c.lags
    );
    let _ = writeln!(
        out,
        "restarts: {} | seed: {} | tol: {} | max-iters: {} | normalize: {} | init: {}",
        c.restarts,
        c.seed,
        fmt_num(c.tol),
        c.max_iters,
        c.normalize,
        c.init
    );
    let f = &report.fit;
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "fit: objective {} after {} iterations (converged: {}, restart {})",
        fmt_num(f.objective),
        f.iterations,
        f.converged,
        f.restart_index
    );
    if !f.static_times.is_empty() {
        let _ = writeln!(
            out,
            "static slices (assigned, outside objective): {}",
            f.static_times.join(", ")
        );
    }

    if let Some(ch) = &report.ch_table {
        let _ = writeln!(out);
        let _ = writeln!(out, "model selection");
        let _ = writeln!(out, "{:>8}  {:>14}  {:>14}", "clusters", "CH", "objective");
        for row in &ch.candidates {
            let marker = if row.clusters == ch.selected_g {
                " <- selected"
            } else {
                ""
            };
            let _ = writeln!(
                out,
                "{:>8}  {:>14}  {:>14}{marker}",
                row.clusters,
                fmt_num(row.ch),
                fmt_num(row.objective)
            );
        }
        for failure in &ch.failures {
            let _ = writeln!(out, "{:>8}  failed: {}", failure.clusters, failure.error);
        }
    } else {
        let _ = writeln!(out);
        let _ = writeln!(out, "model selection: not computed");
    }

    for (name, table) in [
        ("model centroids", &report.centroids_model),
        ("empirical centroids", &report.centroids_empirical),
    ] {
        let _ = writeln!(out);
        let _ = writeln!(out, "{name} (rows: times, columns: clusters)");
        for (v, var) in table.variables.iter().enumerate() {
            let _ = writeln!(out, "variable {var}");
            let mut header = format!("{:>10}", "time");
            for cl in &table.clusters {
                header.push_str(&format!("{:>14}", cl));
            }
            let _ = writeln!(out, "{header}");
            for (t, time) in table.times.iter().enumerate() {
                let mut line = format!("{time:>10}");
                for g in 0..table.clusters.len() {
                    line.push_str(&format!("{:>14}", fmt_num(table.values[t][g][v])));
                }
                let _ = writeln!(out, "{line}");
            }
        }
    }

    let _ = writeln!(out);
    let _ = writeln!(out, "coefficients");
    let _ = writeln!(
        out,
        "intercept: [{}]",
        report
            .coefficients
            .intercept
            .iter()
            .map(|&v| fmt_num(v))
            .collect::<Vec<_>>()
            .join(", ")
    );
    for (p, lag) in report.coefficients.lag_matrices.iter().enumerate() {
        let _ = writeln!(out, "lag {} matrix:", p + 1);
        for row in lag {
            let _ = writeln!(
                out,
                "  [{}]",
                row.iter()
                    .map(|&v| fmt_num(v))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
        }
    }

    let tr = &report.transitions;
    let _ = writeln!(out);
    let _ = writeln!(out, "transition matrix (rows: time t-1, columns: time t)");
    let mut header = format!("{:>8}", "");
    for cl in &tr.clusters {
        header.push_str(&format!("{:>12}", cl));
    }
    let _ = writeln!(out, "{header}");
    for (a, cl) in tr.clusters.iter().enumerate() {
        let mut line = format!("{cl:>8}");
        for b in 0..tr.clusters.len() {
            line.push_str(&format!("{:>12}", fmt_num(tr.probs[a][b])));
        }
        if tr.empty_rows[a] {
            line.push_str("  (never occupied)");
        }
        let _ = writeln!(out, "{line}");
    }
    let _ = writeln!(out, "switches: {}", tr.n_transitions);

    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "membership shares: [{}]",
        report
            .shares
            .iter()
            .map(|&v| fmt_num(v))
            .collect::<Vec<_>>()
            .join(", ")
    );

    let _ = writeln!(out);
    let _ = writeln!(out, "memberships (one label per time)");
    for row in &f.memberships {
        let labels: Vec<String> = row.clusters.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "{:>12}: {}", row.unit, labels.join(" "));
    }
    out
}

pub fn render(report: &Report, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => to_text_string(report),
        ReportFormat::Tree => to_tree_string(report),
    }
}

/// Writes a rendered report to a file.
pub fn write_report_file<P: AsRef<Path>>(
    report: &Report,
    path: P,
    format: ReportFormat,
) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(render(report, format).as_bytes())?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_six_significant_digits() {
        assert_eq!(round_sig(0.123456789), 0.123457);
        assert_eq!(round_sig(123456789.0), 123457000.0);
        assert_eq!(round_sig(-1.23456749e-7), -1.23457e-7);
        assert_eq!(round_sig(0.0), 0.0);
        assert_eq!(round_sig(2.5), 2.5);
    }

    #[test]
    fn tree_round_trips_through_json() {
        let report = Report {
            config: ConfigEcho {
                command: "fit".into(),
                input: "x.csv".into(),
                clusters: "2".into(),
                lags: 1,
                restarts: 10,
                seed: 7,
                tol: 1e-8,
                max_iters: 200,
                normalize: false,
                init: "mixed".into(),
            },
            fit: FitSection {
                objective: round_sig(0.1234567),
                iterations: 5,
                converged: true,
                restart_index: 2,
                static_times: vec!["1997".into()],
                memberships: vec![MembershipRow {
                    unit: "a".into(),
                    clusters: vec![1, 2],
                }],
            },
            centroids_model: CentroidTable {
                times: vec!["1997".into()],
                clusters: vec!["1".into()],
                variables: vec!["x".into()],
                values: vec![vec![vec![1.0]]],
            },
            centroids_empirical: CentroidTable {
                times: vec!["1997".into(), "1998".into()],
                clusters: vec!["1".into()],
                variables: vec!["x".into()],
                values: vec![vec![vec![1.0]], vec![vec![2.0]]],
            },
            coefficients: CoefficientsSection {
                intercept: vec![0.5],
                lag_matrices: vec![vec![vec![0.9]]],
            },
            ch_table: None,
            transitions: TransitionSection {
                clusters: vec!["1".into(), "2".into()],
                counts: vec![vec![1, 0], vec![0, 1]],
                probs: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                n_transitions: 0,
                empty_rows: vec![false, false],
            },
            shares: vec![0.5, 0.5],
        };
        let text = to_tree_string(&report);
        let back: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(back.fit.objective, report.fit.objective);
        assert_eq!(back.fit.memberships[0].clusters, vec![1, 2]);
        assert!(text.contains("\"ch_table\": null"));
        // stable top-level key set (Value maps iterate sorted)
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let keys: Vec<&str> = value
            .as_object()
            .unwrap()
            .keys()
            .map(|s| s.as_str())
            .collect();
        assert_eq!(
            keys,
            vec![
                "centroids_empirical",
                "centroids_model",
                "ch_table",
                "coefficients",
                "config",
                "fit",
                "shares",
                "transitions"
            ]
        );
        // text rendering marks the absent sweep
        let txt = to_text_string(&report);
        assert!(txt.contains("model selection: not computed"));
    }
}
