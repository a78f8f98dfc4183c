use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("backward requires a scalar loss, got dims {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("{op}: invalid argument: {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    #[error("{0}: non-finite value")]
    NonFinite(&'static str),

    #[error("parameter `{0}` has no gradient")]
    MissingGrad(String),

    #[error("empty sequence")]
    EmptySequence,

    #[error("sample at index {index} has no prior speeds")]
    NoHistory { index: usize },

    #[error("side-camera synthesis skipped at speed {speed} m/s")]
    SynthesisSkipped { speed: f64 },

    #[error("fewer trips ({trips}) than non-empty splits ({splits})")]
    TooFewTrips { trips: usize, splits: usize },

    #[error("line {line}: {detail}")]
    Record { line: usize, detail: String },

    #[error("trip `{trip}` camera {camera}: timestamp {timestamp} does not increase")]
    NonMonotone { trip: String, camera: &'static str, timestamp: f64 },

    #[error("image `{reference}`: {detail}")]
    ImageLoad { reference: String, detail: String },

    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument { op, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CheckpointError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated at byte {0}")]
    Truncated(usize),
    #[error("invalid utf-8 in {0}")]
    Utf8(&'static str),
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("unexpected tensor `{0}`")]
    UnexpectedTensor(String),
    #[error("duplicate tensor `{0}`")]
    DuplicateTensor(String),
    #[error("tensor `{name}` has dims {found:?}, expected {expected:?}")]
    DimMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("incompatible architecture: {0}")]
    Incompatible(String),
    #[error("{0} trailing bytes")]
    Trailing(usize),
}
