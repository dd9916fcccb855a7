use thiserror::Error;

/// Errors produced by the facefuse core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("zero-norm vector in {0}")]
    ZeroNorm(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid grid shape {0}x{1}: height and width must be powers of two")]
    InvalidGrid(usize, usize),

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: u8, num_classes: usize },

    #[error("sketch pixel value {0} is not binary (expected 0, 1 or 255)")]
    NonBinarySketch(u8),

    #[error("modality mismatch: expected {expected}, got {actual}")]
    ModalityMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("codec is untrained")]
    Untrained,

    #[error("invalid 3DMM component length for {part}: expected {expected}, got {actual}")]
    ThreeDmmLength {
        part: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("layer count mismatch: generator has {expected} style layers, got {actual}")]
    LayerCount { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("training diverged at step {step}: loss {loss} was non-finite for {consecutive} consecutive steps")]
    Diverged { step: usize, loss: f64, consecutive: usize },

    #[error("no inversion adapter for this image; {0}")]
    NoInverter(String),

    #[error("no face parser adapter for this image; {0}")]
    NoParser(String),

    #[error("unknown adapter `{name}` for {kind}")]
    UnknownAdapter { kind: &'static str, name: String },

    #[error("adapter contract violated: {0}")]
    Adapter(String),

    #[error("too few samples: need at least {needed}, got {actual}")]
    TooFewSamples { needed: usize, actual: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("png decode: {0}")]
    PngDecode(#[from] png::DecodingError),

    #[error("png encode: {0}")]
    PngEncode(#[from] png::EncodingError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_dim(expected: usize, actual: usize, context: &'static str) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected,
            actual,
            context,
        })
    }
}
