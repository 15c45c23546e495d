use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A closed form asked for a real power of a negative base.
    #[error("constant `{symbol}` is undefined: ({base})^({exponent}) has no real value")]
    UndefinedConstant {
        symbol: &'static str,
        base: f64,
        exponent: f64,
    },
    #[error("domain error in {what}: {detail}")]
    Domain { what: &'static str, detail: String },
    #[error("{what} is not available in the {regime} regime")]
    Regime {
        what: &'static str,
        regime: &'static str,
    },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite value in {what}: {detail}")]
    NonFinite { what: &'static str, detail: String },
    #[error("zero pivot at row {row} of tridiagonal system")]
    ZeroPivot { row: usize },
    #[error("no sign change found for {what} up to {limit}")]
    NoBracket { what: &'static str, limit: f64 },
    #[error("step size underflow at eta = {eta}")]
    StepUnderflow { eta: f64 },
    #[error("insufficient data: {0}")]
    Insufficient(String),
}

pub type Result<T> = std::result::Result<T, Error>;
