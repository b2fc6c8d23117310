//! Batch experiment runner around `rarepp`.

pub mod assertions;
pub mod bundle;
pub mod config;
pub mod experiment;
pub mod plot;
pub mod selftest;

use std::path::{Path, PathBuf};

pub use config::{ConfigError, ExperimentConfig};
pub use experiment::{estimate_q_for, run_experiment, Experiment};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] rarepp::Error),
    #[error(transparent)]
    Plot(#[from] plot::PlotError),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// 2 for bad input, 3 for failures while computing or writing.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(rarepp::Error::InvalidParameter { .. }) => 2,
            CliError::Core(_) => 3,
            CliError::Plot(plot::PlotError::UnknownKind(_) | plot::PlotError::Bundle(_)) => 2,
            CliError::Plot(_) => 3,
            CliError::Write { .. } => 3,
        }
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `bundle.json` and the requested marked measures into `dir`.
pub fn write_outputs(exp: &Experiment, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    let path = dir.join("bundle.json");
    write(&path, &exp.bundle.to_json())?;
    written.push(path);
    let count = exp.bundle.config.output.measures;
    for run in &exp.runs {
        for k in 0..count.min(run.ensemble()) {
            let path = dir.join(format!("measure_n{}_orbit{k}.txt", run.n));
            write(&path, &run.measure(k).to_text())?;
            written.push(path);
        }
    }
    Ok(written)
}
