use crate::tiling::TileCoord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("stride {stride} exceeds patch size {patch}; tiles would leave gaps")]
    CoverageViolation { patch: usize, stride: usize },

    #[error("incomplete coverage: no patch for tile {0}")]
    IncompleteCoverage(TileCoord),

    #[error("backend failed on tile {tile}: {message}")]
    Backend { tile: TileCoord, message: String },

    #[error("raster source: {0}")]
    Source(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("sensitivity undefined: ground truth is empty")]
    UndefinedSensitivity,

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
