//! `pmrun`: reproduce the bridge and smoothing experiments from a config
//! file and/or command-line flags.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical abort.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use pmmc::kernels::SwapVariant;
use pmrun::config::{validate_config, Experiment, Overrides};
use pmrun::runner::{run_experiment, write_artifacts, RunError};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExperimentArg {
    Bridge,
    Smoothing,
    Custom,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Pm1,
    Pm2,
    Simplified,
}

#[derive(Parser, Debug)]
#[command(name = "pmrun", about = "Parallel marginalization experiment runner", version)]
struct Cli {
    /// Config file (TOML); flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Experiment preset to start from.
    #[arg(long, value_enum)]
    experiment: Option<ExperimentArg>,

    /// Root seed for the deterministic substreams.
    #[arg(long)]
    seed: Option<u64>,

    /// Total iterations (burn-in is taken as a fraction of these).
    #[arg(long)]
    iters: Option<u64>,

    /// Swap-attempt probability per step, in [0, 1).
    #[arg(long)]
    alpha: Option<f64>,

    /// Coarsest level index L (L + 1 chains run in parallel).
    #[arg(long)]
    levels: Option<usize>,

    /// Swap kernel variant.
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,

    /// Output directory for CSV artifacts and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Also run the matched single-level Metropolis baseline.
    #[arg(long)]
    baseline_mh: bool,

    /// Abort (exit 3) on weight degeneracy instead of counting a rejection.
    #[arg(long)]
    strict: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let text = match &cli.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => text,
            Err(e) => {
                eprintln!("pmrun: cannot read {}: {e}", path.display());
                return ExitCode::from(2);
            }
        },
        None => String::new(),
    };

    let overrides = Overrides {
        experiment: cli.experiment.map(|e| match e {
            ExperimentArg::Bridge => Experiment::Bridge,
            ExperimentArg::Smoothing => Experiment::Smoothing,
            ExperimentArg::Custom => Experiment::Custom,
        }),
        seed: cli.seed,
        iters: cli.iters,
        alpha: cli.alpha,
        levels: cli.levels,
        variant: cli.variant.map(|v| match v {
            VariantArg::Pm1 => SwapVariant::Pm1,
            VariantArg::Pm2 => SwapVariant::Pm2,
            VariantArg::Simplified => SwapVariant::Simplified,
        }),
        output_dir: cli.out,
        baseline_mh: cli.baseline_mh,
        strict: cli.strict,
    };

    let config = match validate_config(&text, &overrides) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("pmrun: {e}");
            return ExitCode::from(2);
        }
    };

    match run_experiment(&config).and_then(|artifacts| {
        write_artifacts(&config, &artifacts)?;
        Ok(artifacts)
    }) {
        Ok(artifacts) => {
            let s = &artifacts.summary;
            println!(
                "пpmrun: {:?} done: {} recorded iterations in {:.1}s -> {}",
                config.experiment,
                s.recorded_iterations,
                s.wall_seconds,
                config.output_dir.display()
            );
            for r in &s.swap_rates {
                match r.rate {
                    Some(rate) => println!(
                        "  pair {}/{}: rate {rate:.3} ({} / {} attempts)",
                        r.level_low, r.level_high, r.accepts, r.attempts
                    ),
                    None => println!("  pair {}/{}: no attempts", r.level_low, r.level_high),
                }
            }
            if let (Some(tau_pm), Some(tau_mh), Some(speedup)) = (s.tau_int_pm, s.tau_int_mh, s.speedup) {
                println!("  tau_int: pm {tau_pm:.1}, baseline {tau_mh:.1}, cost-normalized speedup {speedup:.2}");
            }
            ExitCode::SUCCESS
        }
        Err(RunError::Numerical(e)) => {
            eprintln!("pmrun: numerical abort: {e}");
            ExitCode::from(3)
        }
        Err(RunError::Io(e)) => {
            eprintln!("pmrun: i/o error: {e}");
            ExitCode::FAILURE
        }
    }
}
