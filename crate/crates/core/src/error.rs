use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("unsupported quadrature exactness {0} (maximum is 8)")]
    UnsupportedDegree(usize),

    #[error("point {0:?} lies outside the mesh")]
    OutOfDomain([f64; 3]),

    /// `pivot` is the elimination step at which the factorization broke down,
    /// when the backend can report it.
    #[error("singular system (pivot {pivot:?}): {detail}")]
    SingularSystem { pivot: Option<usize>, detail: String },

    #[error("iteration did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("incompatible interface data: plate integral of the velocity is {integral:.3e}")]
    Compatibility { integral: f64 },

    #[error("observed rate undefined: {0}")]
    UndefinedRate(String),

    #[error("configuration error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
