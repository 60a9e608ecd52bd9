use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed file: {0}")]
    Format(String),

    #[error("wav: unsupported encoding: {0}")]
    UnsupportedCodec(String),

    #[error("wav: {channels} channels present, select one explicitly")]
    AmbiguousChannels { channels: u16 },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("sff: unstable filter, pole radius {0} is not inside the unit circle")]
    Stability(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("spectrogram: need at least 2 GCIs, found {0}")]
    InsufficientGci(usize),

    #[error("domain: {0}")]
    Domain(String),

    #[error("nn: shape mismatch at {stage}: {detail}")]
    Shape { stage: String, detail: String },

    #[error("nn: batch norm needs at least 2 samples in training mode")]
    DegenerateBatch,

    #[error("nn: {0}")]
    Usage(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(stage: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Shape {
            stage: stage.into(),
            detail: detail.into(),
        }
    }
}
