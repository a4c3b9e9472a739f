use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite entry in input")]
    NonFinite,
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid model: {0}")]
    Validation(String),
    #[error("unobservable: rank {rank} < {states} states")]
    Unobservable { rank: usize, states: usize },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("problem too large for exhaustive search: {size} > {limit}")]
    Size { size: usize, limit: usize },
    #[error("search needs {combinations} combinations, ceiling is {ceiling}")]
    SearchBudget { combinations: u128, ceiling: u128 },
    #[error("numerical invariant violated: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
