use std::fmt;
use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage tag attached to errors surfaced by [`crate::pipeline`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    FilterCeiling,
    Density,
    Prompts,
    Segment,
    FilterMasks,
    Contour,
    Topology,
    Eval,
    Render,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Ingest => "ingest",
            Stage::FilterCeiling => "filter-ceiling",
            Stage::Density => "density",
            Stage::Prompts => "prompts",
            Stage::Segment => "segment",
            Stage::FilterMasks => "filter-masks",
            Stage::Contour => "contour",
            Stage::Topology => "topology",
            Stage::Eval => "eval",
            Stage::Render => "render",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("malformed point record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("non-finite coordinate in point {index}")]
    NonFiniteCoordinate { index: usize },
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("voxel size must be positive, got {0}")]
    NonPositiveVoxel(f64),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate extent: x {x_ext}, y {y_ext}")]
    DegenerateExtent { x_ext: f64, y_ext: f64 },
    #[error("point {index} at ({x}, {y}) falls outside the projection frame")]
    PointOutsideFrame { index: usize, x: f64, y: f64 },
    #[error("density raster has no nonzero counts")]
    EmptyCounts,
    #[error("raster is empty")]
    EmptyRaster,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("segmentation backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("frame mismatch: {0}")]
    FrameMismatch(String),
    #[error("decode failure: {0}")]
    DecodeFailure(String),
    #[error("raster dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("no candidate masks")]
    NoCandidates,
    #[error("mask has {0} foreground components, expected one")]
    MultipleComponents(usize),
    #[error("contour degenerated to {0} edges after merging")]
    DegenerateAfterMerge(usize),
    #[error("rooms {a} and {b} overlap beyond tolerance")]
    OverlappingRooms { a: String, b: String },
    #[error("ground truth has no boundary segments")]
    EmptyGroundTruth,
    #[error("invalid synthetic layout: {0}")]
    InvalidLayout(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O failure: {0}")]
    Io(#[from] io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at(self, stage: Stage) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error, with stage tags peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
