//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors produced by construction, factorization, synthesis and simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or signal dimensions do not fit together.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An input violates a documented precondition (non-finite entry,
    /// non-positive parameter, asymmetric matrix, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An iterative kernel failed to converge or produced unusable output.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A solvability or admissibility condition of the synthesis failed.
    #[error("condition failed: {0}")]
    Condition(String),

    /// The boundary matrix K is singular, so the plant has no discrete form.
    #[error("not well-posed: {0}")]
    NotWellPosed(String),

    /// A pencil eigenvalue sits on the unit circle within tolerance, so no
    /// stable/antistable splitting exists.
    #[error("dichotomy failure: {0}")]
    Dichotomy(String),

    /// The pencil does not carry the requested number of stable eigenvalues.
    #[error("subspace dimension mismatch: expected {expected} stable eigenvalues, found {found}")]
    SubspaceDimension { expected: usize, found: usize },

    /// An indefinite factorization was requested with the wrong inertia.
    #[error("sign condition violated: {0}")]
    SignCondition(String),

    /// Cholesky-type factorization hit a non-positive pivot.
    #[error("not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// A feedback interconnection has a singular algebraic loop.
    #[error("ill-posed interconnection: {0}")]
    IllPosed(String),

    /// Transfer-function evaluation too close to a pole.
    #[error("pole proximity: {0}")]
    PoleProximity(String),

    /// A query lies outside the computed horizon or domain.
    #[error("out of range: {0}")]
    Range(String),

    /// A synthesis stage failed; wraps the underlying error with the stage name.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attach a synthesis stage name to an error bubbling out of a sub-step.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors that indicate bad input rather than a failed
    /// mathematical condition. The CLI maps these to exit code 2.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_) | Error::Contract(_) | Error::Io(_) | Error::Json(_)
        ) || matches!(self, Error::Stage { source, .. } if source.is_input_error())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
