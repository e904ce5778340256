//! Experiment execution: burn-in, recorded iterations, the optional
//! single-level baseline, diagnostics, and artifact output.

use std::fs;
use std::io::{self, BufWriter};
use std::path::Path;
use std::time::Instant;

use pmmc::density::ProblemKind;
use pmmc::diagnostics::{
    autocorrelation, cost_normalized_comparison, integrated_act, write_autocorr_csv, write_path_csv,
    write_swaprates_csv, write_trace_csv, SwapRateTable, TraceBuffer,
};
use pmmc::hierarchy::init_hierarchy;
use pmmc::kernels::{mh_sweep, pm_step, PmConfig};
use pmmc::rng::{Role, Streams};
use serde::Serialize;
use thiserror::Error;

use crate::config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum RunError {
    /// A kernel aborted (strict-mode weight degeneracy, degenerate
    /// denominators, invalid problem construction).
    #[error("numerical abort: {0}")]
    Numerical(#[from] pmmc::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Per-pair acceptance row as serialized into `summary.json`.
#[derive(Clone, Debug, Serialize)]
pub struct PairRate {
    pub level_low: usize,
    pub level_high: usize,
    pub attempts: u64,
    pub accepts: u64,
    pub rate: Option<f64>,
    pub degenerate: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    /// The fully resolved configuration; re-running from it reproduces the
    /// run.
    pub config: ExperimentConfig,
    pub seed: u64,
    pub burn_in_iterations: u64,
    pub recorded_iterations: u64,
    pub swap_rates: Vec<PairRate>,
    /// Mean per-level sweep acceptance over the recorded window.
    pub sweep_acceptance: Vec<f64>,
    pub tau_int_pm: Option<f64>,
    pub tau_int_mh: Option<f64>,
    /// Measured multilevel-to-baseline cost per iteration.
    pub cost_ratio: Option<f64>,
    /// `tau_mh / (cost_ratio * tau_pm)`.
    pub speedup: Option<f64>,
    pub seconds_per_iteration_pm: Option<f64>,
    pub seconds_per_iteration_mh: Option<f64>,
    pub degenerate_swaps: u64,
    pub wall_seconds: f64,
}

/// Everything a run produces, kept in memory so callers (and the acceptance
/// suite) can postprocess without reparsing files.
#[derive(Debug)]
pub struct RunArtifacts {
    pub summary: Summary,
    pub swap_table: SwapRateTable,
    /// Midpoint trace over the recorded window.
    pub pm_trace: Vec<f64>,
    /// Baseline midpoint trace (post its own burn-in) when requested.
    pub mh_trace: Option<Vec<f64>>,
    /// Level-0 values at each observation index over the recorded window
    /// (smoothing runs only): `(site, trace)`.
    pub site_traces: Vec<(usize, Vec<f64>)>,
    /// Periodic level-0 snapshots `(recorded iteration, values)`.
    pub snapshots: Vec<(u64, Vec<f64>)>,
    pub final_level0: Vec<f64>,
    pub delta: f64,
}

/// Run burn-in plus recorded iterations of the mixture kernel and, when
/// requested, the matched single-level baseline.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts, RunError> {
    let wall_start = Instant::now();
    let spec = config.problem_spec()?;
    let streams = Streams::new(config.seed);
    let step_scales = config.resolved_step_scales(&spec);
    let kernel_cfg = PmConfig {
        alpha: config.alpha,
        m_schedule: config.m_schedule,
        variant: config.variant,
        step_scales: step_scales.clone(),
        strict: config.strict,
    };

    let mut state = init_hierarchy(&spec, config.levels, &mut streams.stream(0, 0, Role::Init))?;

    let total = config.iters;
    let burn = (total as f64 * config.burn_in_fraction).floor() as u64;
    let mut table = SwapRateTable::new(config.levels);
    let mut pm_trace = Vec::with_capacity((total - burn) as usize);
    let tracked_sites: Vec<usize> = match spec.kind() {
        ProblemKind::Smoothing => spec
            .observations()
            .expect("smoothing spec has observations")
            .times
            .clone(),
        ProblemKind::Bridge => Vec::new(),
    };
    let mut site_traces: Vec<(usize, Vec<f64>)> =
        tracked_sites.iter().map(|&s| (s, Vec::new())).collect();
    let mut snapshots = Vec::new();
    let mut sweep_acc = vec![0u64; config.levels + 1];
    let mut sweep_prop = vec![0u64; config.levels + 1];
    let mut degenerate_swaps = 0u64;

    let pm_start = Instant::now();
    for step in 0..total {
        let record = pm_step(&mut state, &kernel_cfg, step, &streams)?;
        if step < burn {
            continue;
        }
        if let Some(swap) = &record.swap {
            table.record(swap.pair.0, swap.accepted, swap.degenerate);
            degenerate_swaps += swap.degenerate as u64;
        }
        for (l, s) in record.sweeps.iter().enumerate() {
            sweep_acc[l] += s.accepted as u64;
            sweep_prop[l] += s.proposed as u64;
        }
        pm_trace.push(state.midpoint());
        for (site, trace) in site_traces.iter_mut() {
            trace.push(state.levels[0].values[*site]);
        }
        let recorded = step - burn;
        if config.snapshot_every > 0 && recorded % config.snapshot_every == 0 {
            snapshots.push((recorded, state.levels[0].values.clone()));
        }
    }
    let pm_secs = pm_start.elapsed().as_secs_f64();
    let secs_per_iter_pm = if total > 0 { Some(pm_secs / total as f64) } else { None };

    // Matched baseline: single-level random-walk Metropolis on the fine
    // path, using the same per-site proposal scale as level 0.
    let mut mh_trace = None;
    let mut secs_per_iter_mh = None;
    if config.baseline_mh {
        let mh_iters = config.resolved_baseline_iters();
        let mh_burn = (mh_iters as f64 * config.burn_in_fraction).floor() as u64;
        let mut path = init_hierarchy(&spec, 1, &mut streams.stream(0, 0, Role::Baseline))?
            .levels
            .remove(0);
        let mid = (path.values.len() - 1) / 2;
        let mut trace = Vec::with_capacity((mh_iters - mh_burn) as usize);
        let mh_start = Instant::now();
        for step in 0..mh_iters {
            let mut rng = streams.stream(step, 0, Role::Baseline);
            mh_sweep(&mut path, &spec, step_scales[0], &mut rng);
            if step >= mh_burn {
                trace.push(path.values[mid]);
            }
        }
        let mh_secs = mh_start.elapsed().as_secs_f64();
        secs_per_iter_mh = if mh_iters > 0 { Some(mh_secs / mh_iters as f64) } else { None };
        mh_trace = Some(trace);
    }

    // Diagnostics over the recorded windows.
    let pm_buffer = TraceBuffer::from_series("y_mid", pm_trace.clone());
    let tau_int_pm = integrated_act(&pm_buffer).ok();
    let (tau_int_mh, cost_ratio, speedup) = match &mh_trace {
        Some(series) => {
            let mh_buffer = TraceBuffer::from_series("y_mid_mh", series.clone());
            let ratio = match (secs_per_iter_pm, secs_per_iter_mh) {
                (Some(pm), Some(mh)) if mh > 0.0 => Some(pm / mh),
                _ => None,
            };
            match ratio {
                Some(r) => match cost_normalized_comparison(&pm_buffer, &mh_buffer, r) {
                    Ok(report) => (Some(report.tau_mh), Some(r), Some(report.speedup)),
                    Err(_) => (integrated_act(&mh_buffer).ok(), Some(r), None),
                },
                None => (integrated_act(&mh_buffer).ok(), None, None),
            }
        }
        None => (None, None, None),
    };

    let swap_rates = (0..table.pairs())
        .map(|p| PairRate {
            level_low: p,
            level_high: p + 1,
            attempts: table.attempts[p],
            accepts: table.accepts[p],
            rate: table.rate(p),
            degenerate: table.degenerate[p],
        })
        .collect();
    let sweep_acceptance = sweep_acc
        .iter()
        .zip(&sweep_prop)
        .map(|(&a, &p)| if p == 0 { 0.0 } else { a as f64 / p as f64 })
        .collect();

    let summary = Summary {
        config: config.clone(),
        seed: config.seed,
        burn_in_iterations: burn,
        recorded_iterations: total - burn,
        swap_rates,
        sweep_acceptance,
        tau_int_pm,
        tau_int_mh,
        cost_ratio,
        speedup,
        seconds_per_iteration_pm: secs_per_iter_pm,
        seconds_per_iteration_mh: secs_per_iter_mh,
        degenerate_swaps,
        wall_seconds: wall_start.elapsed().as_secs_f64(),
    };

    Ok(RunArtifacts {
        summary,
        swap_table: table,
        pm_trace,
        mh_trace,
        site_traces,
        snapshots,
        final_level0: state.levels[0].values.clone(),
        delta: spec.delta,
    })
}

/// Write `trace.csv`, `swaprates.csv`, `autocorr.csv`, path snapshots and
/// `summary.json` into the configured output directory.
pub fn write_artifacts(config: &ExperimentConfig, artifacts: &RunArtifacts) -> Result<(), RunError> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir)?;

    write_trace_csv(BufWriter::new(fs::File::create(dir.join("trace.csv"))?), &artifacts.pm_trace)?;
    write_swaprates_csv(
        BufWriter::new(fs::File::create(dir.join("swaprates.csv"))?),
        &artifacts.swap_table,
    )?;

    let rho = |series: &[f64], cap: usize| -> Option<Vec<f64>> {
        let n = series.len();
        if n < 9 {
            return None;
        }
        let max_lag = ((n - 1) / 4).min(cap);
        autocorrelation(&TraceBuffer::from_series("t", series.to_vec()), max_lag).ok()
    };
    let rho_pm = rho(&artifacts.pm_trace, 1_000);
    let rho_mh = artifacts.mh_trace.as_deref().and_then(|s| rho(s, 10_000));
    write_autocorr_csv(
        BufWriter::new(fs::File::create(dir.join("autocorr.csv"))?),
        rho_pm.as_deref().unwrap_or(&[]),
        rho_mh.as_deref(),
    )?;

    write_path_csv(
        BufWriter::new(fs::File::create(dir.join("path_final.csv"))?),
        artifacts.delta,
        &artifacts.final_level0,
    )?;
    for (iter, values) in &artifacts.snapshots {
        write_path_csv(
            BufWriter::new(fs::File::create(dir.join(format!("path_{iter}.csv")))?),
            artifacts.delta,
            values,
        )?;
    }
    if let Some(mh) = &artifacts.mh_trace {
        write_trace_csv(BufWriter::new(fs::File::create(dir.join("trace_mh.csv"))?), mh)?;
    }

    let json = serde_json::to_string_pretty(&artifacts.summary).expect("summary serializes");
    fs::write(dir.join("summary.json"), json)?;
    Ok(())
}

/// Convenience for tests: run and write in one call.
pub fn run_and_write(config: &ExperimentConfig) -> Result<RunArtifacts, RunError> {
    let artifacts = run_experiment(config)?;
    write_artifacts(config, &artifacts)?;
    Ok(artifacts)
}

/// Compare two output directories' CSV artifacts byte for byte.
pub fn csv_outputs_identical(a: &Path, b: &Path) -> io::Result<bool> {
    let mut names: Vec<String> = fs::read_dir(a)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    for name in &names {
        let other = b.join(name);
        if !other.exists() {
            return Ok(false);
        }
        if fs::read(a.join(name))? != fs::read(other)? {
            return Ok(false);
        }
    }
    Ok(true)
}
