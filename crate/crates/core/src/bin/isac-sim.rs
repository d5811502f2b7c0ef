use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isac_core::error::IsacError;
use isac_core::experiments::{run_preset, ExperimentConfig, Preset, RunOptions};

#[derive(Parser)]
#[command(name = "isac-sim", version, about = "ISAC link-level Monte-Carlo simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset experiment and write its CSV output.
    Run {
        /// fig6, fig7, fig8, fig9, fig10, fig11, fig12 or ase
        #[arg(long)]
        preset: String,
        /// TOML configuration; built-in defaults when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed (overrides the config)
        #[arg(long)]
        seed: Option<u64>,
        /// Number of Monte-Carlo trials (overrides the config)
        #[arg(long)]
        trials: Option<usize>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Write the OMP-SR residual trace of the first trial
        #[arg(long)]
        trace: bool,
        /// Write the measurement matrix of the first trial
        #[arg(long)]
        dump_measurement_matrix: bool,
    },
}

fn run(cmd: Command) -> Result<(), IsacError> {
    let Command::Run { preset, config, seed, trials, out, trace, dump_measurement_matrix } = cmd;
    let preset: Preset = preset.parse()?;
    let mut cfg = match config {
        Some(path) => ExperimentConfig::from_file(&path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    if let Some(t) = trials {
        cfg.run.trials = t;
    }
    let opts = RunOptions { trace, dump_measurement_matrix };
    let output = run_preset(&cfg, preset, &opts)?;
    for path in output.write(&out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("isac-sim: {e}");
            match e {
                IsacError::Config(_) | IsacError::UnknownPreset(_) | IsacError::InvalidParameter(_) => ExitCode::from(2),
                IsacError::Numerical { .. } => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
