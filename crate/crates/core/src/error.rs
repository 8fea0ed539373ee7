use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("z = {z} lies on the spectrum (distance {dist:.3e})")]
    SingularPoint { z: Complex64, dist: f64 },

    #[error("Neumann series diverges: |z| = {modulus} <= lambda_1 = {lambda_max}")]
    Divergence { modulus: f64, lambda_max: f64 },

    #[error("degenerate Schur pivot: |1 - x^T Q_-i x / n| = {0:.3e}")]
    DegeneratePivot(f64),

    #[error("pole in fixed-point map: |1 - Lambda_{index}| = {distance:.3e}")]
    Pole { index: usize, distance: f64 },

    #[error(
        "fixed point did not converge after {iterations} iterations (residual {last_residual:.3e})"
    )]
    NoConvergence {
        iterations: usize,
        last_residual: f64,
        trajectory: Vec<f64>,
    },

    #[error("z = {0} lies on the support of the limiting law")]
    OnSupport(Complex64),

    #[error("contour passes within {clearance:.3e} of the support (minimum {required:.3e})")]
    ContourClearance { clearance: f64, required: f64 },

    #[error("evaluation failed at index {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("rejection rate {rate:.3} exceeds 0.5")]
    Rejection { rate: f64 },

    #[error("singular linear system")]
    Singular,

    #[error("matrix format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at(index: usize, source: Error) -> Self {
        Error::AtIndex {
            index,
            source: Box::new(source),
        }
    }

    /// Numerical failures, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::AtIndex { source, .. } => source.is_numeric(),
            Error::Config(_) | Error::Dimension { .. } | Error::Format(_) | Error::Io(_) => false,
            _ => true,
        }
    }
}
