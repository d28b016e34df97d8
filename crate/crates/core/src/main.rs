use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use photon_filter::config::{load_config, Mode, Overrides};
use photon_filter::run::run;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Master,
    Trajectory,
    Ensemble,
    Validate,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Master => Mode::Master,
            ModeArg::Trajectory => Mode::Trajectory,
            ModeArg::Ensemble => Mode::Ensemble,
            ModeArg::Validate => Mode::Validate,
        }
    }
}

/// Master equations and quantum filters for single-photon inputs.
#[derive(Debug, Parser)]
#[command(name = "photon-filter", version)]
struct Cli {
    mode: ModeArg,
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_traj: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let ov = Overrides {
        seed: cli.seed,
        n_traj: cli.n_traj,
        output: cli.out,
    };
    let cfg = match load_config(&cli.config, cli.mode.into(), &ov) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    log::info!("config sha256 {}", cfg.hash());
    match run(&cfg) {
        Ok(report) => {
            for c in &report.checks {
                println!("{}", c.line());
            }
            println!("wrote {}", cfg.output.display());
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
