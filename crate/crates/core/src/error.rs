use thiserror::Error;

/// Errors produced by the numerical kernels, optimizers and schedulers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    /// The direction oracle is undefined for an all-zero input.
    #[error("degenerate gradient: {0}")]
    DegenerateGradient(String),

    /// Weight-decay step with `lambda * eta` outside `[0, 1]`.
    #[error("invalid step: lambda * eta = {product} (lambda = {lambda}, eta = {eta})")]
    InvalidStep { lambda: f64, eta: f64, product: f64 },

    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("scheduler initialization failed: {0}")]
    SchedulerInit(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable identifier used in reports and CSV tables.
    pub fn kind_name(&self) -> &'static str {
        match self {
            Error::ShapeMismatch(_) => "ShapeMismatchError",
            Error::InvalidShape(_) => "InvalidShapeError",
            Error::DegenerateGradient(_) => "DegenerateGradientError",
            Error::InvalidStep { .. } => "InvalidStepError",
            Error::InvalidCoefficients(_) => "InvalidCoefficientsError",
            Error::SchedulerInit(_) => "SchedulerInitError",
            Error::Numerical(_) => "NumericalError",
            Error::DegenerateInput(_) => "DegenerateInputError",
            Error::Fit(_) => "FitError",
            Error::InvalidArgument(_) => "InvalidArgumentError",
            Error::Config(_) => "ConfigError",
        }
    }
}
