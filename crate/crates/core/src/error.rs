use thiserror::Error;

/// Unified error type for the whole engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("chart dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),

    #[error("jet order mismatch: {0} vs {1}")]
    OrderMismatch(usize, usize),

    #[error("insufficient jet order: need {need}, have {have}")]
    InsufficientOrder { need: usize, have: usize },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("parse error at byte {offset}: {msg}")]
    Parse { msg: String, offset: usize },

    #[error("unbound parameter `{0}`")]
    UnboundParam(String),

    #[error("math domain error: {0}")]
    Domain(String),

    #[error("division by a jet with vanishing constant term")]
    DivisionByZero,

    #[error("singular matrix: constant term is not invertible")]
    SingularMatrix,

    #[error("metric is not positive definite at the evaluation point")]
    NotPositiveDefinite,

    #[error("unsupported dimension n = {n}: {reason}")]
    UnsupportedDim { n: usize, reason: &'static str },

    #[error("unknown builtin metric family `{0}`")]
    UnknownBuiltin(String),

    #[error("invalid metric spec: {0}")]
    InvalidSpec(String),

    #[error("unresolved builtin metric `{0}`; resolve it through the model registry first")]
    UnresolvedBuiltin(String),

    #[error("quadrature budget exceeded: {points} lattice points > budget {budget}")]
    BudgetExceeded { points: u64, budget: u64 },

    #[error("bundle lacks required quantity: {0}")]
    MissingQuantity(&'static str),

    #[error("slot {slot} out of range for tensor of rank {rank}")]
    SlotOutOfRange { slot: usize, rank: usize },

    #[error("invalid contraction: {0}")]
    InvalidContraction(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
