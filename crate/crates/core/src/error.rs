use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied data that violates an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Shapes, indices or fingerprints do not line up.
    #[error("structural mismatch: {0}")]
    Structure(String),

    #[error("class `{class}` has no pixels in the dataset; regenerate or augment the data so every class is present")]
    MissingClass { class: &'static str },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error at {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("failed to load {path}: {msg}")]
    Load { path: PathBuf, msg: String },

    #[error("scene generation failed: {0}")]
    Generation(String),

    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },

    #[error("training diverged in {stage} stage at epoch {epoch}: loss = {loss}")]
    Diverged {
        stage: String,
        epoch: usize,
        loss: f64,
    },

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("frame {frame_id}: {source}")]
    Frame {
        frame_id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_frame(self, frame_id: &str) -> Self {
        Error::Frame {
            frame_id: frame_id.to_string(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by user input or configuration rather than by
    /// an internal failure.
    pub fn is_user_error(&self) -> bool {
        match self {
            Error::InvalidInput(_)
            | Error::MissingClass { .. }
            | Error::Load { .. }
            | Error::Config { .. }
            | Error::Checkpoint { .. }
            | Error::Structure(_) => true,
            Error::Frame { source, .. } => source.is_user_error(),
            _ => false,
        }
    }
}
