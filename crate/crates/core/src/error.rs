use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("tape is not topologically ordered at node {0}")]
    CyclicGraph(usize),

    #[error("parameter `{0}` has no gradient")]
    MissingGrad(String),

    #[error("parameter `{0}` not found")]
    MissingParam(String),

    #[error("insufficient correspondences: found {found}, need at least {needed}")]
    InsufficientCorrespondences { found: usize, needed: usize },

    #[error("rank-deficient point configuration")]
    RankDeficient,

    #[error("RANSAC failed to find a model with at least 4 inliers")]
    RansacFailure,

    #[error("singular homography")]
    SingularHomography,

    #[error("undefined variance: both inputs are constant")]
    UndefinedVariance,

    #[error("image too small for {op}: {height}x{width}")]
    TooSmall {
        op: &'static str,
        height: usize,
        width: usize,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("loss became NaN at epoch {epoch}, step {step}")]
    NanLoss { epoch: usize, step: usize },

    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("png decode error: {0}")]
    PngDecode(#[from] png::DecodingError),

    #[error("png encode error: {0}")]
    PngEncode(#[from] png::EncodingError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
