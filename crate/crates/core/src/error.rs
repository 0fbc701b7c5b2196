use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid layer: {0}")]
    InvalidLayer(String),

    /// A layer chain that does not line up. `index` counts accelerator layers from 0.
    #[error("layer {index} ({label}): {reason}")]
    Config {
        index: usize,
        label: String,
        reason: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("corrupt event stream: {0}")]
    CorruptStream(String),

    #[error("weight file: {0}")]
    WeightFile(String),

    #[error("idx file: {0}")]
    Idx(String),

    #[error("cannot parse {token:?}: {reason}")]
    Parse { token: String, reason: String },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name of the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::InvalidLayer(_) => "invalid_layer",
            Error::Config { .. } => "config",
            Error::Degenerate(_) => "degenerate_input",
            Error::CorruptStream(_) => "corrupt_stream",
            Error::WeightFile(_) => "weight_file",
            Error::Idx(_) => "idx",
            Error::Parse { .. } => "parse",
            Error::Infeasible(_) => "infeasible",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn parse(token: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            token: token.into(),
            reason: reason.into(),
        }
    }
}
