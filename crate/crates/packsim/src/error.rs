//! Crate-wide error type.
//!
//! Every fallible operation in the toolkit returns [`Result`]. Variants are
//! grouped by failure class so callers (in particular the CLI) can separate
//! *usage* errors (bad parameters, malformed grids or files) from *numerical*
//! errors (divergence, singular linearizations, step-size collapse).

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All error conditions reported by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Model parameters violate a structural requirement (wrong vector
    /// length, non-positive rate, malformed interaction matrix, ...).
    #[error("invalid parameter: {message}")]
    Param {
        /// Human-readable description naming the offending field.
        message: String,
    },

    /// Grid construction or grid/field compatibility failure.
    #[error("invalid grid: {message}")]
    Grid {
        /// Human-readable description.
        message: String,
    },

    /// A state or vector had the wrong number of entries for its grid.
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch {
        /// Required length.
        expected: usize,
        /// Provided length.
        got: usize,
    },

    /// Time stepping failed: the step size collapsed below the retry limit
    /// while positivity was still violated, or the state left the admissible
    /// region.
    #[error("time step failed: {message}")]
    Step {
        /// Human-readable description including the final step size.
        message: String,
    },

    /// A least-squares fit had too little usable data or a degenerate system.
    #[error("fit failed: {message}")]
    Fit {
        /// Human-readable description.
        message: String,
    },

    /// Eigenvalue computation failed or was requested beyond its limits.
    #[error("spectrum error: {message}")]
    Spectrum {
        /// Human-readable description.
        message: String,
    },

    /// A linear solve met an (estimated) singular matrix.
    #[error("singular Jacobian: condition estimate {condition:.3e} exceeds limit")]
    SingularJacobian {
        /// Ratio of largest to smallest pivot magnitude.
        condition: f64,
    },

    /// An iteration (Newton, corrector, optimizer) exhausted its budget.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        /// Iterations performed.
        iterations: usize,
        /// Final residual sup-norm.
        residual: f64,
    },

    /// A requested bifurcation mode has no finite critical coupling
    /// (the denominator of the closed-form expression is non-positive).
    #[error("mode {mode} has no finite critical coupling (denominator {denominator:.3e} <= 0)")]
    Resonance {
        /// Mode index.
        mode: usize,
        /// Value of the closed-form denominator.
        denominator: f64,
    },

    /// An operation restricted to one space dimension was called in two,
    /// or vice versa.
    #[error("dimension error: {message}")]
    Dimension {
        /// Human-readable description.
        message: String,
    },

    /// Not enough samples to perform a requested diagnostic.
    #[error("insufficient data: needed {needed}, got {got}")]
    InsufficientData {
        /// Minimum sample count.
        needed: usize,
        /// Provided sample count.
        got: usize,
    },

    /// A state left the domain of a diagnostic (e.g. non-positive prey
    /// density where a logarithmic derivative is required).
    #[error("domain error: {message}")]
    Domain {
        /// Human-readable description.
        message: String,
    },

    /// A numeric artifact file failed structural validation (non-numeric
    /// cell, wrong column count, coordinates not matching the grid, ...).
    #[error("artifact error: {message}")]
    Artifact {
        /// Human-readable description naming the offending cell or column.
        message: String,
    },

    /// Underlying I/O failure while reading or writing artifacts.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed JSON in a parameter or configuration file.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Malformed CSV in a data artifact.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Convenience constructor for [`Error::Param`].
    pub fn param(message: impl Into<String>) -> Self {
        Error::Param { message: message.into() }
    }

    /// Convenience constructor for [`Error::Grid`].
    pub fn grid(message: impl Into<String>) -> Self {
        Error::Grid { message: message.into() }
    }

    /// Convenience constructor for [`Error::Dimension`].
    pub fn dimension(message: impl Into<String>) -> Self {
        Error::Dimension { message: message.into() }
    }

    /// Convenience constructor for [`Error::Domain`].
    pub fn domain(message: impl Into<String>) -> Self {
        Error::Domain { message: message.into() }
    }

    /// Convenience constructor for [`Error::Artifact`].
    pub fn artifact(message: impl Into<String>) -> Self {
        Error::Artifact { message: message.into() }
    }

    /// True when the error reflects bad *usage* (parameters, grids, files)
    /// rather than a numerical failure at runtime. The CLI maps usage errors
    /// to exit code 2 and numerical errors to exit code 1.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Param { .. }
                | Error::Grid { .. }
                | Error::ShapeMismatch { .. }
                | Error::Dimension { .. }
                | Error::Artifact { .. }
                | Error::Json(_)
                | Error::Csv(_)
        )
    }

    /// Short machine-readable kind tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Param { .. } => "param",
            Error::Grid { .. } => "grid",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::Step { .. } => "step",
            Error::Fit { .. } => "fit",
            Error::Spectrum { .. } => "spectrum",
            Error::SingularJacobian { .. } => "singular_jacobian",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Resonance { .. } => "resonance",
            Error::Dimension { .. } => "dimension",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::Domain { .. } => "domain",
            Error::Artifact { .. } => "artifact",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
