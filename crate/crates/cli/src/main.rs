use std::path::{Path, PathBuf};
use std::process::ExitCode;

use beamtrack_cli::plot::{plot_convergence, plot_landscapes, LandscapeFilter};
use beamtrack_cli::{run_experiments, verify_run, CliError, ExperimentConfig, RunOptions};
use beamtrack_core::SpeedClass;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "beamtrack", version, about = "Beam tracking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Speed {
    Slow,
    Medium,
    Fast,
}

impl From<Speed> for SpeedClass {
    fn from(s: Speed) -> Self {
        match s {
            Speed::Slow => SpeedClass::Slow,
            Speed::Medium => SpeedClass::Medium,
            Speed::Fast => SpeedClass::Fast,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured episode and write the run directory.
    Run {
        config: PathBuf,
        /// Added to every configured seed.
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
        /// Worker threads (overrides the config).
        #[arg(long)]
        parallelism: Option<usize>,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy, overhead and RSRP error against slot, one curve per speed.
    PlotConvergence { run_dir: PathBuf },
    /// Acquisition, posterior-mean and true-RSRP heatmaps at logged slots.
    PlotLandscape {
        run_dir: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        slots: Vec<u64>,
        #[arg(long)]
        variant: Option<String>,
        #[arg(long, value_enum)]
        speed: Option<Speed>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute the results table from the per-slot CSVs and compare bytes.
    Verify { run_dir: PathBuf },
}

fn run(config: &Path, opts: RunOptions) -> Result<ExitCode, CliError> {
    let text = std::fs::read_to_string(config).map_err(|e| CliError::io(config, e))?;
    let cfg = ExperimentConfig::parse(&text, config)?;
    let report = run_experiments(&cfg, &text, &opts)?;
    let failures = report.failures();
    println!(
        "{} episodes, {failures} failed; results in {}",
        report.episodes.len(),
        report.out_dir.display()
    );
    for e in report.episodes.iter() {
        if let Err(msg) = &e.outcome {
            eprintln!(
                "episode {} / {:?} / seed {} failed: {msg}",
                cfg.variants[e.variant].name, e.speed, e.seed
            );
        }
    }
    Ok(if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Run {
            config,
            seed_offset,
            parallelism,
            out,
        } => run(
            &config,
            RunOptions {
                out_dir: out,
                seed_offset,
                parallelism,
            },
        ),
        Command::PlotConvergence { run_dir } => {
            for p in plot_convergence(&run_dir)? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::PlotLandscape {
            run_dir,
            slots,
            variant,
            speed,
            seed,
        } => {
            let filter = LandscapeFilter {
                variant,
                speed: speed.map(Into::into),
                seed,
            };
            for p in plot_landscapes(&run_dir, &slots, &filter)? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { run_dir } => {
            let r = verify_run(&run_dir)?;
            println!(
                "ok: {} rows recomputed from {} episodes",
                r.rows, r.episodes_checked
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
