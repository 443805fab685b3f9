use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, column: usize, message: String },

    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },

    #[error("frame {frame} out of range (frame_count {frame_count})")]
    FrameOutOfRange { frame: usize, frame_count: usize },

    #[error("could not place object {object} of {n_objects} without overlap after {attempts} attempts")]
    InfeasiblePacking { object: usize, n_objects: usize, attempts: usize },

    #[error("custom variation requires at least one override")]
    EmptyCustomVariation,

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("objective evaluation failed at {params}: {source}")]
    Objective {
        params: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid { field: field.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for the CLI: 2 for data and validation problems, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Invalid { .. }
            | Error::FrameOutOfRange { .. }
            | Error::InfeasiblePacking { .. }
            | Error::EmptyCustomVariation
            | Error::Mismatch(_) => 2,
            Error::Objective { source, .. } => source.exit_code(),
        }
    }
}
