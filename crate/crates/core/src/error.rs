use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{what}: expected dimension {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite activation after layer {layer}")]
    NonFiniteActivation { layer: usize },

    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("requested {requested} components but the covariance rank is at most {achievable}")]
    RankTooLow { requested: usize, achievable: usize },

    #[error("component {index} has zero eigenvalue and cannot be projected onto")]
    ZeroEigenvalue { index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("layer {layer}: spatial size collapses to zero ({height}x{width} input)")]
    SpatialCollapse {
        layer: usize,
        height: usize,
        width: usize,
    },

    #[error("network head is {actual}, operation needs {expected}")]
    HeadMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("covariance is not positive semi-definite (eigenvalue {0})")]
    NotPsd(f64),

    #[error("vertex {index} marginal covariance is singular")]
    SingularMarginal { index: usize },

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("item `{id}` has {actual} vertices, dataset expects {expected}")]
    MixedVertexCount {
        id: String,
        expected: usize,
        actual: usize,
    },

    #[error("could not place subject {index} inside the image after {attempts} attempts")]
    GenerationFailed { index: usize, attempts: usize },

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
