//! Time-varying K-means clustering of multivariate longitudinal panels.
//!
//! Units observed on `J` variables over `T` times are partitioned into `G`
//! clusters per time, with cluster centroids linked across time by a vector
//! autoregression of order `P`. The model is fitted by least squares with a
//! three-block coordinate descent (centroids, autoregressive coefficients,
//! partition) and multi-start, and the number of clusters is chosen by the
//! Calinski–Harabasz criterion.
//!
//! The crate is `no_std`-compatible (`alloc` required); file formats and the
//! command-line front end live in the companion `carclust` crate.

#![cfg_attr(not(test), no_std)]
// Indexed loops mirror the matrix algebra throughout; iterator rewrites make
// the kernels harder to check against their derivations.
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod metrics;
pub mod normalize;
pub mod panel;
pub mod rng;
pub mod selection;
pub mod synth;

pub use error::{CarError, Result};
pub use estimator::{
    fit, fit_multistart, fit_restart, fit_with_init, objective, update_centroids,
    update_coefficients, update_partition, FitConfig, FitResult, InitStrategy,
};
pub use linalg::Mat;
pub use panel::{
    cluster_sizes, empirical_centroids, CentroidSequence, LongitudinalPanel, PartitionSequence,
    VarCoefficients,
};
pub use selection::{
    between_scatter, ch_index, select_g, select_g_with, within_scatter, CHReport, ChCandidate,
};
