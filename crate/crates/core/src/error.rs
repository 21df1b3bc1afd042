use thiserror::Error;

pub type Result<T> = std::result::Result<T, HeError>;

#[derive(Debug, Error)]
pub enum HeError {
    #[error("capacity exceeded: {what} needs {needed} slots but only {available} are available")]
    Capacity {
        what: String,
        needed: usize,
        available: usize,
    },

    #[error("modulus budget exhausted: operation needs {needed} bits, ciphertext has {available}")]
    DepthExhausted { needed: u32, available: u32 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid backend parameters: {0}")]
    Params(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("malformed IDX file: {0}")]
    Idx(String),

    #[error("layer {layer}: {source}")]
    Layer {
        layer: String,
        #[source]
        source: Box<HeError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HeError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        HeError::Argument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        HeError::Shape(msg.into())
    }

    pub(crate) fn in_layer(self, layer: &str) -> Self {
        HeError::Layer {
            layer: layer.to_string(),
            source: Box::new(self),
        }
    }

    /// True when the root cause is an exhausted modulus budget.
    pub fn is_depth_exhausted(&self) -> bool {
        match self {
            HeError::DepthExhausted { .. } => true,
            HeError::Layer { source, .. } => source.is_depth_exhausted(),
            _ => false,
        }
    }
}
