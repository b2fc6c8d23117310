use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rarepp_cli::plot::{emit_plot_data, PlotKind};
use rarepp_cli::{assertions, selftest, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "rarepp", version, about = "Rare-event point process experiments")]
struct Cli {
    /// Worker threads for the orbit ensembles (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its bundle.
    Run {
        config: PathBuf,
        /// Overrides the master seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Check the `[assert]` section and exit with 1 on failure.
        #[arg(long)]
        assert: bool,
        /// Output directory (default: `output.dir`, else `out/<name>`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract plot-ready CSV tables from a bundle.
    Plot {
        bundle: PathBuf,
        /// ecdf_vs_pi, theta_vs_n, dprime_vs_n or laplace_grid.
        #[arg(long)]
        kind: String,
        /// Output directory (default: the bundle's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the cluster gap `q` from the configured ensembles.
    EstimateQ {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Quick internal consistency checks.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Run {
            config,
            seed,
            assert,
            out,
        } => {
            let cfg = load(&config, seed)?;
            let exp = rarepp_cli::run_experiment(&cfg)?;
            let dir = out
                .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| Path::new("out").join(&cfg.name));
            for p in rarepp_cli::write_outputs(&exp, &dir)? {
                println!("wrote {}", p.display());
            }
            if !assert {
                return Ok(true);
            }
            let checks = assertions::check(&exp.bundle, &cfg.assertions.clone().unwrap_or_default());
            for c in &checks {
                println!("{c}");
            }
            Ok(checks.iter().all(|c| c.passed))
        }
        Command::Plot { bundle, kind, out } => {
            let kind: PlotKind = kind.parse()?;
            let text = std::fs::read_to_string(&bundle)
                .map_err(|e| rarepp_cli::plot::PlotError::Bundle(format!("{}: {e}", bundle.display())))?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| rarepp_cli::plot::PlotError::Bundle(e.to_string()))?;
            let dir = out.unwrap_or_else(|| bundle.parent().map(Path::to_path_buf).unwrap_or_default());
            for p in emit_plot_data(&value, kind, &dir)? {
                println!("wrote {}", p.display());
            }
            Ok(true)
        }
        Command::EstimateQ { config, seed } => {
            let cfg = load(&config, seed)?;
            let est = rarepp_cli::estimate_q_for(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&est).expect("estimates serialise"));
            Ok(true)
        }
        Command::Selftest { seed } => {
            let checks = selftest::run_all(seed)?;
            for c in &checks {
                println!("{c}");
            }
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
