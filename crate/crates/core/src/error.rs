use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pose-estimation stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A point projected by the camera sits at or behind the image plane.
    #[error("point {index} is at or behind the camera plane (z = {depth})")]
    BehindCamera { index: usize, depth: f64 },

    #[error("bounding box lies entirely outside the image")]
    OutOfFrame,

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("no candidate pose places the points in front of the camera")]
    NoValidPose,

    #[error("no hypothesis reached {min_sample} inliers (best had {best})")]
    ConsensusFailure { best: usize, min_sample: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("viewing rays are nearly parallel (max separation {angle:e} rad)")]
    DegenerateBaseline { angle: f64 },

    #[error("sampling gave up after {0} rejections")]
    SamplingFailure(usize),

    #[error("sun direction is parallel to the panel hinge axis")]
    UndefinedTracking,

    /// A manifest, wireframe or config file does not match its schema.
    #[error("schema error{}: field `{field}`: {reason}", record.map(|i| format!(" in record {i}")).unwrap_or_default())]
    Schema {
        record: Option<usize>,
        field: String,
        reason: String,
    },

    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn schema(record: Option<usize>, field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Schema {
            record,
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
