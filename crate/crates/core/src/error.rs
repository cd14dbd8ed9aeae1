use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit codes used by the `frfnet` binary.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const CONTRACT: i32 = 4;
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("mass matrix is not positive definite (pivot {pivot} = {value:e})")]
    IndefiniteMass { pivot: usize, value: f64 },

    #[error("symmetric eigensolver did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("input autospectrum vanishes at bin {bin} ({freq_hz} Hz)")]
    DeadBin { bin: usize, freq_hz: f64 },

    #[error("basis mismatch: expected basis {expected}, got {found}")]
    BasisMismatch { expected: String, found: String },

    #[error("training diverged at epoch {epoch} (mse {mse:e})")]
    Diverged { epoch: usize, mse: f64 },

    #[error("corrupt container {path}: {reason}")]
    Corrupt { path: String, reason: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => exit_code::CONFIG,
            Error::Corrupt { .. } | Error::Io(_) | Error::Json(_) | Error::Csv(_) => {
                exit_code::DATA
            }
            Error::Stage { source, .. } => source.exit_code(),
            _ => exit_code::CONTRACT,
        }
    }

    /// Tags an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
