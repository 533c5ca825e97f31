use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch at {layer}: expected {expected}, got {actual}")]
    Dimension {
        layer: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("episode already complete")]
    EpisodeComplete,

    #[error("qp {qp} outside allowed range [{lo}, {hi}]")]
    QpOutOfRange { qp: f64, lo: f64, hi: f64 },

    #[error("episode contains no transitions")]
    EmptyEpisode,

    #[error("malformed episode: {0}")]
    InvalidEpisode(String),

    #[error("insufficient data: need {needed} windows, buffer holds {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("no data: {0}")]
    NoData(&'static str),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("search space of {size} tuples exceeds bound {bound}")]
    SearchSpaceExceeded { size: f64, bound: f64 },

    #[error("invalid rate-distortion curve: {0}")]
    InvalidCurve(String),

    #[error("R-D curves have no overlapping quality interval")]
    NoQualityOverlap,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("training diverged at episode {episode}: {detail}")]
    Diverged { episode: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
