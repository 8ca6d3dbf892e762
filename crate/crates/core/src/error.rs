use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("step size underflow at t = {t:e} (singularity or stiffness)")]
    StepSizeUnderflow { t: f64 },

    #[error("non-finite vector field evaluation at t = {t:e}")]
    NonFiniteRhs { t: f64 },

    #[error("integration exceeded {max_steps} steps")]
    MaxStepsExceeded { max_steps: usize },

    #[error("no event crossing before the horizon t = {horizon:e}")]
    NoCrossing { horizon: f64 },

    #[error("event function returned a non-finite value at t = {t:e}")]
    NonFiniteEvent { t: f64 },

    #[error("quadrature did not converge within {levels} levels (estimate {estimate:e})")]
    QuadratureNotConverged { levels: usize, estimate: f64 },

    #[error("non-finite integrand value at x = {x:e}")]
    NonFiniteIntegrand { x: f64 },

    #[error("no sign change on bracket [{a:e}, {b:e}]")]
    NoSignChange { a: f64, b: f64 },

    #[error("derivative vanished during Newton iteration at x = {x:e}")]
    DerivativeVanished { x: f64 },

    #[error("root finder did not converge in {iterations} iterations")]
    RootNotConverged { iterations: usize },

    #[error("point lies outside the domain: {0}")]
    Domain(String),

    #[error("spectrum does not split into a real and an imaginary pair: {0}")]
    Spectrum(String),

    #[error("result is below the numerical floor: {0}")]
    NumericalFloor(String),

    #[error("internal check failed: {0}")]
    Check(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Validation errors are caused by the caller's input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Invalid(_) | Error::Io(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
