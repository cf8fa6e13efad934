use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("pixel ({u}, {v}) outside a {cols}x{rows} detector")]
    PixelOutOfRange {
        u: usize,
        v: usize,
        cols: usize,
        rows: usize,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("reconstruction diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Diverged { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
