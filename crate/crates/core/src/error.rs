use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("singular factor: {0}")]
    Singular(String),
    #[error("kernel is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("paths of a {0} kernel are not mean-square differentiable")]
    NotDifferentiable(&'static str),
    #[error("white-noise kernel has no finite equal-time value: {0}")]
    WhiteNoiseDivergence(&'static str),
    #[error("ensemble of {got} paths is below the required {need}")]
    InsufficientEnsemble { got: usize, need: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed data: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Domain(format!("{what}[{i}] = {} is not finite", values[i]))),
        None => Ok(()),
    }
}
