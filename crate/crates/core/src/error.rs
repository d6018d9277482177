use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty coordinate vector")]
    EmptyVector,
    #[error("degenerate direction: coordinates have zero or non-finite norm")]
    DegenerateDirection,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("overlap {0} lies outside [-1, 1] beyond rounding slack")]
    OverlapOutOfRange(f64),
    #[error("measure needs at least one atom")]
    EmptyMeasure,
    #[error("{points} support points but {weights} weights")]
    LengthMismatch { points: usize, weights: usize },
    #[error("weight {index} is negative or not finite ({value})")]
    InvalidWeight { index: usize, value: f64 },
    #[error("all weights are zero")]
    ZeroMass,
    #[error("atom {index} has norm {norm}, expected a point on the unit sphere")]
    NotOnSphere { index: usize, norm: f64 },
    #[error("field has {got} values but the support has {expected} atoms")]
    FieldLength { expected: usize, got: usize },
    #[error("field value {index} is not finite")]
    NonFiniteField { index: usize },
    #[error("enumeration needs {needed} tuples, budget is {budget}; use the sampled variant")]
    BudgetExceeded { needed: f64, budget: u64 },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("covariance factorization failed even with jitter {jitter:e}")]
    Factorization { jitter: f64 },
    #[error("field known only on support: covariance-backend realizations cannot be evaluated off the support")]
    FieldOnlyOnSupport,
    #[error("function `{function}` is not convex near x = {at}")]
    NotConvex { function: String, at: f64 },
    #[error("io: {0}")]
    Io(String),
    #[error("format: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
