use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can surface.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("non-finite value entering the graph at {context}")]
    NonFiniteInput { context: String },
    #[error("degenerate norm {norm:e} (must exceed {eps:e}) in {context}")]
    DegenerateNorm {
        norm: f64,
        eps: f64,
        context: String,
    },
    #[error("queue entries must be unit vectors, got norm {0}")]
    NotUnitNorm(f64),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward was already run on this graph")]
    DoubleBackward,
    #[error("model has no clusters")]
    EmptyModel,
    #[error("expected {expected} entries, got {actual}")]
    CountMismatch { expected: usize, actual: usize },
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("likelihood surrogates must be positive, got {0}")]
    NonPositiveLikelihood(f64),
    #[error("label length mismatch: predicted={predicted}, truth={truth}")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("bad augmentation policy: {0}")]
    BadPolicy(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: u64, detail: String },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
