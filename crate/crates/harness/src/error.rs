use std::path::PathBuf;

use hypersel_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

impl HarnessError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self::Data(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Process exit code: 1 usage or config, 2 data, 3 invariant violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Io { .. } | Self::Data(_) => 2,
            Self::Invariant(_) => 3,
            Self::Core(e) => match e {
                CoreError::InvalidParameter { .. }
                | CoreError::InvalidProblem(_)
                | CoreError::NoStoppingCondition
                | CoreError::MixedLevels => 1,
                _ => 2,
            },
        }
    }
}
