use thiserror::Error;

pub type Result<T> = std::result::Result<T, GeomError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    /// An argument lies outside the domain of a closed-form function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A coordinate vector does not lie on the defining quadric of the model space.
    #[error("point is off the model space (scaled quadric residual {residual:e})")]
    OffQuadric { residual: f64 },

    /// Caller broke an operation contract (mismatched base points, bad frame, wrong dimension).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Geodesic computation at the point itself or on the cut locus.
    #[error("singular configuration: {0}")]
    Singularity(String),

    #[error("degenerate immersion at parameters {params:?} (min metric eigenvalue {min_eigenvalue:e})")]
    DegenerateImmersion { params: Vec<f64>, min_eigenvalue: f64 },

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for GeomError {
    fn from(e: std::io::Error) -> Self {
        GeomError::Io(e.to_string())
    }
}

impl From<csv::Error> for GeomError {
    fn from(e: csv::Error) -> Self {
        GeomError::Io(e.to_string())
    }
}
