use std::io;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid persistence {0}: must be at least 1")]
    InvalidPersistence(usize),

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unknown environment `{0}`")]
    UnknownEnv(String),

    #[error("invalid environment configuration: {0}")]
    InvalidEnvConfig(String),

    #[error("step called on a terminated episode")]
    StepAfterTerminal,

    #[error("action {action} out of range for {n_actions} actions")]
    ActionOutOfRange { action: usize, n_actions: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("iteration count {iterations} is not a multiple of persistence {persistence}")]
    IterationsNotMultiple { iterations: usize, persistence: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing entry: {0}")]
    Missing(String),

    #[error("dataset mismatch: {0}")]
    DatasetMismatch(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::InvalidPersistence(_) => "invalid_persistence",
            Self::InvalidMdp(_) => "invalid_mdp",
            Self::InvalidPolicy(_) => "invalid_policy",
            Self::InvalidDistribution(_) => "invalid_distribution",
            Self::Dimension(_) => "dimension",
            Self::UnknownEnv(_) => "unknown_env",
            Self::InvalidEnvConfig(_) => "invalid_env_config",
            Self::StepAfterTerminal => "step_after_terminal",
            Self::ActionOutOfRange { .. } => "action_out_of_range",
            Self::Empty(_) => "empty",
            Self::IterationsNotMultiple { .. } => "iterations_not_multiple",
            Self::Config(_) => "config",
            Self::Missing(_) => "missing",
            Self::DatasetMismatch(_) => "dataset_mismatch",
            Self::Format(_) => "format",
            Self::Io(_) => "io",
            Self::Json(_) => "json",
            Self::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
