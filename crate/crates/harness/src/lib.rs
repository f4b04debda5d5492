//! Command-line front end: configuration, run directories, manifests,
//! sweeps, checkpoints and metric exports.

pub mod cli;
pub mod config;
pub mod manifest;
pub mod run;

use std::path::PathBuf;

use t2tl::checkpoint::CheckpointError;
use t2tl::encoder::EncoderError;
use t2tl::envs::EnvError;
use t2tl::learner::LearnerError;
use t2tl::ltl::LtlError;
use thiserror::Error;

pub use cli::{run as run_cli, Cli, Command, Status};
pub use config::{ConfigError, ExperimentConfig, LearnerMode};
pub use manifest::{RunManifest, CSV_SCHEMA, MANIFEST_FILE};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// A formula or label given on the command line.
    #[error(transparent)]
    Input(LtlError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl HarnessError {
    /// 2 for configuration and input errors, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Input(_) | HarnessError::Usage(_) => 2,
            _ => 3,
        }
    }
}
