//! Experiment runner for the `nonsmooth-ggl` schemes: flat-text run
//! configurations, named presets, CSV/JSON trajectories and JSON summaries.

pub mod config;
pub mod output;
pub mod presets;
pub mod run;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{parse_config, ConfigError, Format, ModelKind, RunConfig};
pub use presets::{
    preset, run_sweep, worker_count, write_sweep_summary, Sweep, SweepSummary, PRESETS,
};
pub use run::{run_experiment, summary_path, RunReport, Summary};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Simulation(#[from] nonsmooth_ggl::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown preset `{0}` (see list-presets)")]
    UnknownPreset(String),
}

impl RunError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
