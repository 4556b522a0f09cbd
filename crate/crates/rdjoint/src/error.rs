//! Error types shared across the crate.
//!
//! Errors fall into two broad classes that the CLI maps to distinct exit
//! codes: input problems (bad files, bad configuration) and estimator
//! failures (designs too thin to support the requested fit, covariance
//! matrices without the required definiteness). A rejected or accepted
//! hypothesis is never an error.

use crate::kernel::Side;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RdError {
    /// The one-sided weighted design does not identify the requested
    /// polynomial: too few support points on that side of the cutoff, or a
    /// numerically singular Gram matrix.
    #[error("singular design on the {side} side{context}: {detail}")]
    SingularDesign {
        side: Side,
        /// Extra caller context such as the component being estimated.
        context: String,
        detail: String,
    },

    /// The sample cannot support the requested computation at all
    /// (e.g. fewer points on a side than the density fit needs).
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    /// Fewer same-side units than the number of nearest neighbors requested.
    #[error("not enough neighbors on the {side} side: need {need}, have {have} other units")]
    InsufficientNeighbors {
        side: Side,
        need: usize,
        have: usize,
    },

    /// A per-component variance is zero or not finite.
    #[error("component {name} is degenerate: {detail}")]
    ComponentDegenerate { name: String, detail: String },

    /// The joint covariance matrix is not positive definite, so the Wald
    /// statistic is unavailable. The matrix is never regularized.
    #[error("covariance matrix is not positive definite; Wald statistic unavailable")]
    NotPositiveDefinite,

    /// The covariance matrix is not positive semi-definite even after
    /// allowing for floating-point noise, so Monte Carlo draws from it are
    /// meaningless.
    #[error("covariance matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    /// Two inputs that must be aligned have different lengths.
    #[error("length mismatch: x has {x_len} entries, {what} has {other_len}")]
    LengthMismatch {
        x_len: usize,
        other_len: usize,
        what: String,
    },

    /// A requested column is absent from the CSV header.
    #[error("missing column {0:?} in dataset header")]
    MissingColumn(String),

    /// A selected cell is present but not interpretable as a finite number.
    #[error("non-numeric cell in data row {row}, column {column:?}: {value:?}")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    /// Every row was dropped while filtering missing values.
    #[error("no rows remain after dropping rows with missing values")]
    EmptyAfterFiltering,

    /// A configuration value is out of range or missing. The message names
    /// the offending field.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Too many Monte Carlo replications failed to produce a decision.
    #[error("experiment aborted: {failed} of {total} replications failed ({detail})")]
    ExperimentAborted {
        failed: usize,
        total: usize,
        detail: String,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl RdError {
    /// Attach the component being estimated to a singular-design error so
    /// the message says which fit failed. Other errors pass through.
    pub fn with_component(self, what: &str) -> RdError {
        match self {
            RdError::SingularDesign {
                side,
                context,
                detail,
            } => RdError::SingularDesign {
                side,
                context: if context.is_empty() {
                    format!(" while estimating {what}")
                } else {
                    context
                },
                detail,
            },
            other => other,
        }
    }

    /// Exit code the CLI should terminate with when this error aborts a
    /// run: 2 for input problems, 3 for estimator failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            RdError::SingularDesign { .. }
            | RdError::DegenerateSample(_)
            | RdError::InsufficientNeighbors { .. }
            | RdError::ComponentDegenerate { .. }
            | RdError::NotPositiveDefinite
            | RdError::NotPsd { .. }
            | RdError::ExperimentAborted { .. } => 3,
            RdError::LengthMismatch { .. }
            | RdError::MissingColumn(_)
            | RdError::NonNumericCell { .. }
            | RdError::EmptyAfterFiltering
            | RdError::InvalidConfig(_)
            | RdError::Io(_)
            | RdError::Csv(_)
            | RdError::Json(_) => 2,
        }
    }
}
