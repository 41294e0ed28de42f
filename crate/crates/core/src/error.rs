use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("degenerate anchor simplex (|vol| = {volume:e}, threshold {threshold:e})")]
    Singular { volume: f64, threshold: f64 },
    #[error("integral diverges: {0}")]
    NonIntegrable(String),
    #[error("superlevel set has infinite measure")]
    InfiniteMeasure,
    #[error("inconsistent input: {0}")]
    Consistency(String),
    #[error("ratio undefined: denominator norm is zero")]
    ZeroNorm,
    #[error("set has (numerically) zero volume")]
    EmptySet,
    #[error("point on the hemisphere boundary: {0}")]
    Boundary(String),
    #[error("iteration collapsed to zero norm at step {0}")]
    Collapse(usize),
    #[error("malformed data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the numerics (divergence, collapse) rather
    /// than by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonIntegrable(_) | Error::Collapse(_) | Error::InfiniteMeasure | Error::ZeroNorm
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
