//! Error type shared by the panel model, the estimator and the diagnostics.

use alloc::string::String;
use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, CarError>;

/// Everything that can go wrong when building panels or fitting the model.
#[derive(Debug, Clone, PartialEq)]
pub enum CarError {
    /// A panel, partition or coefficient set failed a structural invariant.
    InvalidInput(String),
    /// Array shapes of the arguments disagree (clusters, variables or lags).
    DimensionMismatch(String),
    /// Cluster `g` has no members at time `t`.
    EmptyCluster { cluster: usize, time: usize },
    /// The centroid update degenerated beyond what pseudo-inverses handle.
    SingularDesign { time: usize },
    /// The stacked coefficient regression has no usable rows.
    DegenerateDesign(String),
    /// A fit configuration is inconsistent with the target panel.
    InvalidConfig(String),
    /// Every restart of a multi-start fit failed.
    AllRestartsFailed,
    /// The Calinski–Harabasz index is undefined for a single cluster.
    UndefinedForSingleCluster,
    /// The within-cluster scatter has zero trace, so the index diverges.
    ZeroWithinScatter,
    /// Transition matrices need at least two time points.
    SingleTimePoint,
    /// A unit index is outside the panel.
    UnknownUnit(usize),
    /// A constant variable cannot be min-max normalized.
    ConstantVariable { variable: usize },
    /// A synthetic-panel specification is inconsistent.
    InvalidSpec(String),
}

impl fmt::Display for CarError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CarError::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            CarError::DimensionMismatch(msg) => write!(f, "dimension mismatch: {msg}"),
            CarError::EmptyCluster { cluster, time } => {
                write!(f, "cluster {cluster} has no members at time {time}")
            }
            CarError::SingularDesign { time } => {
                write!(
                    f,
                    "centroid update design is fully degenerate at time {time}"
                )
            }
            CarError::DegenerateDesign(msg) => write!(f, "degenerate design: {msg}"),
            CarError::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            CarError::AllRestartsFailed => write!(f, "all restarts failed"),
            CarError::UndefinedForSingleCluster => {
                write!(
                    f,
                    "Calinski-Harabasz index is undefined for a single cluster"
                )
            }
            CarError::ZeroWithinScatter => {
                write!(f, "within-cluster scatter is zero; index is undefined")
            }
            CarError::SingleTimePoint => {
                write!(f, "transition matrix needs at least two time points")
            }
            CarError::UnknownUnit(i) => write!(f, "unknown unit index {i}"),
            CarError::ConstantVariable { variable } => {
                write!(
                    f,
                    "variable {variable} is constant; min-max map is undefined"
                )
            }
            CarError::InvalidSpec(msg) => write!(f, "invalid synthetic spec: {msg}"),
        }
    }
}

impl core::error::Error for CarError {}
