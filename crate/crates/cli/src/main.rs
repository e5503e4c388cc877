use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

mod config;
mod report;
mod run;

use config::{Mode, ModelName, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "noisetomo",
    version,
    about = "Photon-number distribution reconstruction from on/off detector statistics"
)]
struct Cli {
    /// Pipeline to run; overrides `mode` in the config file.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Measurement file (read, or written in simulate mode).
    #[arg(long)]
    data: Option<PathBuf>,
    /// JSON report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plot table path (reconstruct mode).
    #[arg(long)]
    plot: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Bootstrap replicates; 0 disables.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Enable drift correction using the reference state from the config.
    #[arg(long)]
    drift_correct: bool,
    #[arg(long, value_enum)]
    model: Option<ModelName>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] noisetomo::Error),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use noisetomo::ErrorCategory;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e.category() {
                ErrorCategory::Config => 2,
                ErrorCategory::Data => 3,
                ErrorCategory::Solver => 4,
                ErrorCategory::Consistency => 5,
            },
            CliError::Output(_) => 1,
        }
    }

    fn category(&self) -> &'static str {
        match self.exit_code() {
            2 => "config",
            3 => "data",
            4 => "solver",
            5 => "consistency",
            _ => "output",
        }
    }
}

fn effective_config(cli: Cli) -> Result<(RunConfig, Mode), CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mode = cli
        .mode
        .or(config.mode)
        .ok_or_else(|| CliError::Config("no mode given (--mode or 'mode' in the config)".into()))?;
    config.mode = Some(mode);
    if let Some(data) = cli.data {
        config.io.data = Some(data);
    }
    if let Some(out) = cli.out {
        config.io.out = Some(out);
    }
    if let Some(plot) = cli.plot {
        config.io.plot = Some(plot);
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(b) = cli.bootstrap {
        config.bootstrap = b;
    }
    if let Some(model) = cli.model {
        config.model = model;
    }
    if cli.drift_correct {
        match config.drift_correction.as_mut() {
            Some(d) => d.enabled = true,
            None => {
                return Err(CliError::Config(
                    "--drift-correct needs a [drift_correction] section with a reference state"
                        .into(),
                ))
            }
        }
    }
    Ok((config, mode))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = effective_config(cli).and_then(|(config, mode)| run::run(&config, mode));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(e.exit_code())
        }
    }
}
