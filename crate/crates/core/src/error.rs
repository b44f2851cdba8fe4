use thiserror::Error;

pub type Result<T> = std::result::Result<T, GilError>;

#[derive(Debug, Error)]
pub enum GilError {
    #[error("potential evaluated outside its domain at s = {s}: {what}")]
    Domain { s: f64, what: &'static str },

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("invalid constants: {0}")]
    InvalidConstants(String),

    #[error("norm diverges: {0}")]
    DivergentNorm(&'static str),

    #[error("quadrature did not reach tolerance {tol:e}: last change {change:e} at order {order}")]
    QuadratureFailure { tol: f64, change: f64, order: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("chain diagnostics: {0}")]
    Chain(String),

    #[error("renormalization weights underflowed; rescale the integrand")]
    WeightUnderflow,

    #[error("convexity certification failed: {0}")]
    Certification(String),

    #[error("config: {0}")]
    Config(String),

    #[error("field format: {0}")]
    FieldFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
