use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{}: {message}", path.display())]
    Image { path: PathBuf, message: String },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("missing tile {}", .0.display())]
    MissingTile(PathBuf),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] tils_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn json(path: &Path, e: &serde_json::Error) -> Self {
        let message = e.to_string();
        // serde_json appends " at line L column C"; keep only the cause
        let message = match message.rfind(" at line ") {
            Some(i) => message[..i].to_string(),
            None => message,
        };
        CliError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message,
        }
    }

    pub fn image(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}
