use thiserror::Error;

/// Errors produced anywhere in the design, modelling and simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("level {level} at factor {factor} is outside 1..={m}")]
    InvalidLevel { factor: usize, level: u32, m: u32 },

    #[error("invalid lattice: d = {d}, M = {m} (need d >= 1, M >= 2)")]
    InvalidLattice { d: usize, m: u32 },

    #[error("dimension mismatch: expected (d = {expected_d}, M = {expected_m}), got (d = {got_d}, M = {got_m})")]
    DimensionMismatch {
        expected_d: usize,
        expected_m: u32,
        got_d: usize,
        got_m: u32,
    },

    #[error("malformed one-hot row {row}: row sum is {sum}, expected 1")]
    MalformedRow { row: usize, sum: usize },

    #[error("operation needs at least two design points, got {0}")]
    NeedsTwoPoints(usize),

    #[error("empty design")]
    EmptyDesign,

    #[error("required distance q = {q} is outside 0..={d}")]
    InvalidQ { q: i64, d: usize },

    #[error("problem too large for exhaustive enumeration: {what} ({size} > {limit})")]
    TooLarge { what: &'static str, size: f64, limit: f64 },

    #[error("truth vector is constant; RRMSE is undefined")]
    ConstantTruth,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("simulator error: {0}")]
    Simulator(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
