use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("simulation diverged at step {step} (t = {time_s:.3} s)")]
    SimulationDiverged { step: usize, time_s: f64 },

    #[error("invalid well spec `{well_id}`: {reason}")]
    InvalidSpec { well_id: String, reason: String },

    #[error("offset of {offset_s} s leaves no overlap in a {len} s record")]
    EmptyOverlap { offset_s: i64, len: usize },

    #[error("SSI undefined: mean bit speed {mean} is not positive")]
    UndefinedSsi { mean: f64 },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("operation needs a {expected} bundle, got {actual}")]
    Kind { expected: String, actual: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv { path: path.into(), source }
    }

    /// True for failures caused by numerics rather than user input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SimulationDiverged { .. } | Error::Diverged { .. }
        )
    }
}
