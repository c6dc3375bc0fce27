use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {details}")]
    ShapeMismatch { op: &'static str, details: String },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("spectrum is not conjugate symmetric: {0}")]
    NotConjugateSymmetric(String),

    #[error("aliasing: f0 {f0} Hz >= Nyquist {nyquist} Hz at sample {index}")]
    Aliasing { f0: f64, nyquist: f64, index: usize },

    #[error("filter design failed: {0}")]
    FilterDesign(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown model kind: {0:?}")]
    UnknownModelKind(String),

    #[error("unsupported file format: {0}")]
    Format(String),

    #[error("training failed: {0}")]
    Train(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
