use std::path::PathBuf;

/// Errors surfaced by every module of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shape mismatch, invalid argument or an unsupported construction.
    #[error("build error: {0}")]
    Build(String),

    /// A loss evaluated to NaN or infinity.
    #[error("training diverged at step {step} (loss = {loss})")]
    TrainingDiverged { step: usize, loss: f64 },

    #[error("parameter budget {target} is infeasible: {reason}")]
    BudgetInfeasible { target: usize, reason: String },

    /// Generation produced a constant signal that cannot be normalized.
    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    /// Malformed container or raster file.
    #[error("{}: malformed file at byte {offset}: {message}", path.display())]
    Format {
        path: PathBuf,
        offset: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn build(msg: impl Into<String>) -> Self {
        Error::Build(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
