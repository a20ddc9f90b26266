//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("identically zero polynomial")]
    IdenticallyZeroPolynomial,

    #[error("non-finite function value at x = {0}")]
    NonFiniteEvaluation(f64),

    #[error("eigensolver failed to converge within {iterations} iterations")]
    EigenNoConvergence { iterations: usize },

    #[error("singular system")]
    SingularSystem,

    #[error("indefinite KRR system singular; perturb lambda")]
    KrrSingular,

    #[error("degenerate mixture: nprime = 0 requires alpha = 1")]
    DegenerateMixture,

    #[error("non-identifiable: alpha_plus == alpha_minus")]
    NonIdentifiable,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("vanishing moment derivative")]
    VanishingMomentDerivative,

    #[error("class {0} absent from labeled data")]
    ClassAbsent(i8),

    #[error("{path}:{line}: {msg}")]
    CsvParse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code classification: 2 for configuration/input problems,
    /// 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::CsvParse { .. }
            | Error::Io(_)
            | Error::DimensionMismatch(_)
            | Error::ClassAbsent(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
