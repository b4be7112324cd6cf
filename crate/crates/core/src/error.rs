use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid tensor: shape {shape:?} does not describe {len} values")]
    InvalidTensor { shape: Vec<usize>, len: usize },

    #[error("agent {agent}: {detail}")]
    Agent { agent: usize, detail: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("label {label} out of range for {classes} output classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed file at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("unsupported format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("subcarrier {index} is deep-faded (|h|^2 = {gain_sq}) but was passed as active")]
    DeepFadeInActiveSet { index: usize, gain_sq: f64 },

    #[error("no participating agents")]
    NoParticipants,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
