use thiserror::Error;

/// Errors surfaced by the simulation, dataset, and model layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("case validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("invalid node id {0}")]
    InvalidNode(usize),

    #[error("power flow diverged after {iterations} iterations (max mismatch {mismatch:.3e} pu)")]
    PowerFlowDiverged { iterations: usize, mismatch: f64 },

    #[error("singular system while {0}")]
    SingularSystem(String),

    #[error("invalid fault spec: {0}")]
    InvalidFault(String),

    #[error("simulation unstable: rotor angle {angle:.2} rad on generator {generator} at t = {time:.3} s")]
    Unstable {
        generator: usize,
        angle: f64,
        time: f64,
    },

    #[error("time index {index} out of range (trace has {len} samples)")]
    TimeIndexOutOfRange { index: usize, len: usize },

    #[error("dataset recipe mismatch: {0}")]
    RecipeMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: usize },

    #[error("training aborted at epoch {epoch}: non-finite loss")]
    NonFiniteLoss { epoch: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("link sampling failed: {0}")]
    LinkSampling(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
