use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid modulus: must be at least 1")]
    InvalidModulus,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported Bessel order {0} (max 60)")]
    UnsupportedOrder(u32),
    #[error("unsupported form label {0:?}")]
    UnsupportedForm(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("integrity error: {relation} fails at n = {n}")]
    Integrity { relation: String, n: u64 },
    #[error("coefficient {requested} out of range (n_max = {available}); re-expand with a larger n_max")]
    Range { requested: u64, available: u64 },
    #[error("tail budget exceeded: requested {requested:e}, achievable {achievable:e} within cutoff {cutoff}")]
    TailBudget {
        requested: f64,
        achievable: f64,
        cutoff: u64,
    },
    #[error("unsupported space: weight {k}, level {level} is not in the dimension-one table")]
    UnsupportedSpace { k: u32, level: u64 },
    #[error("ill-conditioned fit: |lhs| = {0:e} on the fitting window")]
    IllConditioned(f64),
    #[error("inconsistent case: {0}")]
    Case(String),
    #[error("{0} is not invertible modulo {1}")]
    NotInvertible(i64, u64),
    #[error("integer overflow while {0}")]
    Overflow(String),
    #[error("contour truncation insufficient; try T = {suggested}")]
    Truncation { suggested: f64 },
}
