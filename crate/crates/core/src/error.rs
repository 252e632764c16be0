use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dims(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("no diffusion block to check (noise dimension is 0)")]
    NoDiffusionBlock,

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite state at step {step}, particle {particle}")]
    BlowUp { step: usize, particle: usize },

    #[error("time grid mismatch: {0}")]
    GridMismatch(String),

    #[error("sample outside histogram grid (dimension {dim}, value {value})")]
    OutsideGrid { dim: usize, value: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("singular diffusion matrix at step {step}, particle {particle} (condition number {condition:e})")]
    SingularDiffusion {
        step: usize,
        particle: usize,
        condition: f64,
    },

    #[error("epsilon-net too large: log10(size) = {log10_size:.1} exceeds cap {cap:.1}; try epsilon >= {suggested_epsilon}")]
    NetTooLarge {
        log10_size: f64,
        cap: f64,
        suggested_epsilon: f64,
    },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("artifact error: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
