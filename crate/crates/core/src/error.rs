use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    // Audio decoding and dataset assembly.
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("audio stream contains no samples")]
    EmptyAudio,
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("expected sample rate {expected} Hz, got {got} Hz")]
    WrongSampleRate { expected: u32, got: u32 },
    #[error("analysis frame of {frame} samples does not fit in clip of {len} samples")]
    FrameTooLong { frame: usize, len: usize },

    // Tensor plumbing.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value produced in {0}")]
    NonFinite(String),

    // Model files.
    #[error("{0}: bad magic bytes")]
    BadMagic(PathBuf),
    #[error("unsupported model format version {0}")]
    VersionMismatch(u16),
    #[error("{0}: checksum mismatch")]
    ChecksumMismatch(PathBuf),
    #[error("{0}: file truncated")]
    TruncatedFile(PathBuf),

    // Baseline training.
    #[error("no training data")]
    EmptyData,
    #[error("sequence of {got} frames is shorter than the minimum of {min}")]
    SequenceTooShort { got: usize, min: usize },
    #[error("degenerate training data: {0}")]
    DegenerateData(String),

    // Evaluation.
    #[error("label and prediction counts differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty evaluation input")]
    Empty,
    #[error("ROC needs at least one example of each class")]
    OneClassOnly,
    #[error("split {0} received no clips")]
    EmptySplit(&'static str),
    #[error("window contains no admitted segments")]
    EmptyWindow,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of numeric health (NaN/Inf or a gradient check
    /// that exceeded tolerance) as opposed to bad input data.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }
}
