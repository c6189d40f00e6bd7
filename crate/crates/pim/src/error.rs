use thiserror::Error;

/// Errors across the pipeline, split into validation failures (bad inputs,
/// exit code 1 in the CLI) and numerical failures (exit code 2).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown manifold tag: {0}")]
    UnknownManifold(String),

    #[error("manifold {tag} needs at least {min} points, got {got}")]
    TooFewPoints { tag: String, min: usize, got: usize },

    #[error("bandwidth t must be positive, got {0}")]
    NonPositiveBandwidth(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no closed-form spectrum for {0}; use the flat-torus tag for an analytic torus spectrum")]
    NoGroundTruth(String),

    #[error("mass matrix not positive definite (leading minor {minor}); consider --jitter to regularize the diagonal")]
    MassNotPositiveDefinite { minor: usize },

    #[error("stiffness matrix singular beyond the constant nullspace (pivot {pivot} at row {row}); the cloud is likely disconnected at this bandwidth")]
    SingularStiffness { row: usize, pivot: f64 },

    #[error("eigensolver did not converge after {iterations} iterations{}", detail.as_deref().map(|d| format!(": {d}")).unwrap_or_default())]
    NoConvergence {
        iterations: usize,
        detail: Option<String>,
    },

    #[error("linear solve did not reach tolerance: residual {residual:.3e} > {tol:.3e} after {iterations} iterations")]
    ToleranceNotReached {
        residual: f64,
        tol: f64,
        iterations: usize,
    },

    #[error("query point outside kernel support (w_t,h = 0); no sample within 2*sqrt(t)")]
    OutsideSupport,

    #[error("cluster {index} not resolved: no computed eigenvalue within the matching window of {value}")]
    ClusterNotResolved { index: usize, value: f64 },

    #[error("malformed {kind} file {path}: {detail}")]
    FileFormat {
        kind: &'static str,
        path: String,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// CLI exit code: 1 for validation problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MassNotPositiveDefinite { .. }
            | Error::SingularStiffness { .. }
            | Error::NoConvergence { .. }
            | Error::ToleranceNotReached { .. }
            | Error::OutsideSupport
            | Error::ClusterNotResolved { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
