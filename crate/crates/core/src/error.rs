use thiserror::Error;

/// Errors raised anywhere in the factorization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("missing required weight `{0}`")]
    MissingWeight(&'static str),

    #[error("unknown formulation `{0}`")]
    UnknownFormulation(String),

    #[error("spec for {formulation} is inconsistent: {reason}")]
    InconsistentSpec { formulation: String, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dictionary is infeasible (distance to constraint set {distance:e})")]
    Infeasible { distance: f64 },

    #[error("the dictionary regularizer depends on the sample count; bind the spec to a dataset first")]
    UnboundSampleCount,

    #[error("Douglas-Rachford splitting stopped at residual {residual:e} after {iters} iterations")]
    SplittingStalled { residual: f64, iters: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("rank-deficient ground-truth basis (rank {rank} < {cols})")]
    RankDeficient { rank: usize, cols: usize },

    #[error("solver diverged: {0}")]
    Diverged(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("malformed matrix file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
