use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("generator is not irreducible: state {0} cannot reach every other state")]
    NotIrreducible(usize),
    #[error("detailed balance fails on edge ({x}, {y}): residual {residual:e}")]
    NotReversible { x: usize, y: usize, residual: f64 },
    #[error("bad measure: {0}")]
    BadMeasure(String),
    #[error("bad density: {0}")]
    BadDensity(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("non-finite result: {0}")]
    NonFinite(String),
    #[error("density is not the minimizer: first-order spread {spread:e}")]
    NotMinimizer { spread: f64 },
    #[error("could not bracket the normalization constant")]
    NoBracket,
    #[error("step failure at t = {t}: step {step:e} fell below the minimum")]
    StepFailure { t: f64, step: f64 },
    #[error("fit window too short: {0}")]
    WindowTooShort(String),
    #[error("edge field is not antisymmetric at ({0}, {1})")]
    NotAntisymmetric(usize, usize),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
