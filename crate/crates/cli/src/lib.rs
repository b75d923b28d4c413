//! Command-line surface of the denoiser: strict run configs, training,
//! inference, evaluation and the branch ablation.

pub mod commands;
pub mod config;
pub mod data;

pub use commands::ablate::{ablate, AblationRow, AblationTable, Variant};
pub use commands::denoise::{denoise_dir, DenoiseSummary};
pub use commands::eval::eval_dirs;
pub use commands::gen_toy::gen_toy;
pub use commands::train::{train, TrainOutcome};
pub use config::{DataSource, Mode, Preset, RunConfig, CONFIG_ECHO};

use denoise_core::Error;

/// Environment variable naming the default data root.
pub const DATA_ROOT_ENV: &str = "DENOISE_DATA_ROOT";
/// Reports are written to this subdirectory of an output directory.
pub const REPORT_DIR: &str = "report";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    /// 2 for configuration and data problems, 3 for numerical aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(Error::Numerical(_)) => 3,
            CliError::Core(Error::State(_)) => 1,
            CliError::Core(_) => 2,
        }
    }
}
