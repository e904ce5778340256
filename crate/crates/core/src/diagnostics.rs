//! Run statistics: swap-rate tables, traces, autocorrelation, integrated
//! autocorrelation time, and cost-normalized sampler comparisons.
//!
//! Everything here is pure post-processing over immutable snapshots.
//! Autocorrelations use the biased (divide-by-n) autocovariance estimator,
//! which keeps the estimated sequence positive semidefinite; the integrated
//! time uses the initial-positive-sequence window rule.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;
use std::io::Write;

use crate::error::{Error, Result};

/// A scalar time series recorded during a run, with optional thinning.
#[derive(Clone, Debug)]
pub struct TraceBuffer {
    pub series: Vec<f64>,
    pub stride: usize,
    pub label: String,
    seen: usize,
}

impl TraceBuffer {
    pub fn new(label: impl Into<String>, stride: usize) -> Self {
        Self {
            series: Vec::new(),
            stride: stride.max(1),
            label: label.into(),
            seen: 0,
        }
    }

    pub fn from_series(label: impl Into<String>, series: Vec<f64>) -> Self {
        debug_assert!(series.iter().all(|v| v.is_finite()));
        let seen = series.len();
        Self {
            series,
            stride: 1,
            label: label.into(),
            seen,
        }
    }

    /// Record a value; only every `stride`-th push is kept.
    pub fn push(&mut self, value: f64) {
        debug_assert!(value.is_finite(), "trace value must be finite");
        if self.seen % self.stride == 0 {
            self.series.push(value);
        }
        self.seen += 1;
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
}

/// Attempt/accept counters per adjacent level pair.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SwapRateTable {
    pub attempts: Vec<u64>,
    pub accepts: Vec<u64>,
    /// Attempts rejected because every weight vanished.
    pub degenerate: Vec<u64>,
}

impl SwapRateTable {
    pub fn new(pairs: usize) -> Self {
        Self {
            attempts: vec![0; pairs],
            accepts: vec![0; pairs],
            degenerate: vec![0; pairs],
        }
    }

    pub fn record(&mut self, pair: usize, accepted: bool, degenerate: bool) {
        self.attempts[pair] += 1;
        self.accepts[pair] += accepted as u64;
        self.degenerate[pair] += degenerate as u64;
        debug_assert!(self.accepts[pair] <= self.attempts[pair]);
    }

    pub fn pairs(&self) -> usize {
        self.attempts.len()
    }

    /// Acceptance rate at a pair; `None` until the pair has been attempted.
    pub fn rate(&self, pair: usize) -> Option<f64> {
        if self.attempts[pair] == 0 {
            None
        } else {
            Some(self.accepts[pair] as f64 / self.attempts[pair] as f64)
        }
    }

    pub fn rates(&self) -> Vec<Option<f64>> {
        (0..self.pairs()).map(|p| self.rate(p)).collect()
    }
}

/// Normalized autocorrelation `rho(k)`, `k = 0..=max_lag`, of a trace.
///
/// Uses the mean-subtracted biased sample autocovariance. Requires the
/// trace to be longer than `4 * max_lag` and to have nonzero variance.
pub fn autocorrelation(trace: &TraceBuffer, max_lag: usize) -> Result<Vec<f64>> {
    let n = trace.series.len();
    if n <= 4 * max_lag || n < 2 {
        return Err(Error::InsufficientLength { len: n, max_lag });
    }
    // The direct sum is cheaper until n * max_lag gets large.
    let cov = if (n as u64) * (max_lag as u64 + 1) <= (1 << 22) {
        autocovariance_direct(&trace.series, max_lag)
    } else {
        autocovariance_fft(&trace.series, max_lag)
    };
    normalize_autocovariance(&trace.series, cov)
}

/// Autocorrelation via the direct summation path.
pub fn autocorrelation_direct(trace: &TraceBuffer, max_lag: usize) -> Result<Vec<f64>> {
    let n = trace.series.len();
    if n <= 4 * max_lag || n < 2 {
        return Err(Error::InsufficientLength { len: n, max_lag });
    }
    normalize_autocovariance(&trace.series, autocovariance_direct(&trace.series, max_lag))
}

/// Autocorrelation via the transform path (zero-padded FFT of the
/// mean-subtracted series).
pub fn autocorrelation_fft(trace: &TraceBuffer, max_lag: usize) -> Result<Vec<f64>> {
    let n = trace.series.len();
    if n <= 4 * max_lag || n < 2 {
        return Err(Error::InsufficientLength { len: n, max_lag });
    }
    normalize_autocovariance(&trace.series, autocovariance_fft(&trace.series, max_lag))
}

fn normalize_autocovariance(series: &[f64], cov: Vec<f64>) -> Result<Vec<f64>> {
    let mean_sq = {
        let m = series.iter().sum::<f64>() / series.len() as f64;
        m * m
    };
    // A constant series leaves only rounding residue in c(0).
    if cov[0] <= 1e-20 * (1.0 + mean_sq) {
        return Err(Error::InsufficientVariance);
    }
    Ok(cov.iter().map(|c| c / cov[0]).collect())
}

fn autocovariance_direct(series: &[f64], max_lag: usize) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = series.iter().map(|x| x - mean).collect();
    (0..=max_lag)
        .map(|k| (0..n - k).map(|t| d[t] * d[t + k]).sum::<f64>() / n as f64)
        .collect()
}

fn autocovariance_fft(series: &[f64], max_lag: usize) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|x| Complex::new(x - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for v in buf.iter_mut() {
        *v = Complex::new(v.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    (0..=max_lag)
        .map(|k| buf[k].re / size as f64 / n as f64)
        .collect()
}

/// Integrated autocorrelation time `tau = 1 + 2 sum rho(k)` with the
/// initial-positive-sequence truncation: lags are folded into consecutive
/// pairs and summed while the pair sums stay positive. Anticorrelated
/// chains can legitimately come out below 1.
pub fn integrated_act(trace: &TraceBuffer) -> Result<f64> {
    let n = trace.series.len();
    let max_lag = ((n.saturating_sub(1)) / 4).max(1);
    let rho = autocorrelation(trace, max_lag)?;
    let mut sum = 0.0;
    let mut m = 0;
    while 2 * m + 1 <= max_lag {
        let gamma = rho[2 * m] + rho[2 * m + 1];
        if gamma <= 0.0 {
            break;
        }
        sum += gamma;
        m += 1;
    }
    Ok(2.0 * sum - 1.0)
}

/// Side-by-side mixing comparison of two samplers after normalizing by
/// their per-iteration cost.
#[derive(Clone, Debug, Serialize)]
pub struct SpeedupReport {
    pub tau_pm: f64,
    pub tau_mh: f64,
    /// Wall-clock cost of one multilevel iteration in units of baseline
    /// iterations.
    pub cost_ratio: f64,
    /// `tau_mh / (cost_ratio * tau_pm)`: how many times faster the
    /// multilevel sampler decorrelates per unit of work.
    pub speedup: f64,
}

pub fn cost_normalized_comparison(
    pm_trace: &TraceBuffer,
    mh_trace: &TraceBuffer,
    cost_ratio: f64,
) -> Result<SpeedupReport> {
    let tau_pm = integrated_act(pm_trace)?;
    let tau_mh = integrated_act(mh_trace)?;
    Ok(SpeedupReport {
        tau_pm,
        tau_mh,
        cost_ratio,
        speedup: tau_mh / (cost_ratio * tau_pm),
    })
}

/// `trace.csv`: columns `iter,y_mid`.
pub fn write_trace_csv<W: Write>(mut w: W, series: &[f64]) -> std::io::Result<()> {
    writeln!(w, "iter,y_mid")?;
    for (i, v) in series.iter().enumerate() {
        writeln!(w, "{i},{v}")?;
    }
    Ok(())
}

/// `swaprates.csv`: columns `level_low,level_high,attempts,accepts,rate`.
pub fn write_swaprates_csv<W: Write>(mut w: W, table: &SwapRateTable) -> std::io::Result<()> {
    writeln!(w, "level_low,level_high,attempts,accepts,rate")?;
    for p in 0..table.pairs() {
        match table.rate(p) {
            Some(rate) => writeln!(
                w,
                "{},{},{},{},{rate}",
                p,
                p + 1,
                table.attempts[p],
                table.accepts[p]
            )?,
            None => writeln!(w, "{},{},0,0,", p, p + 1)?,
        }
    }
    Ok(())
}

/// `autocorr.csv`: columns `lag,rho_pm,rho_mh`; a column is blank past the
/// series' reliable window or when the baseline was not run.
pub fn write_autocorr_csv<W: Write>(
    mut w: W,
    rho_pm: &[f64],
    rho_mh: Option<&[f64]>,
) -> std::io::Result<()> {
    writeln!(w, "lag,rho_pm,rho_mh")?;
    let rows = rho_pm.len().max(rho_mh.map_or(0, |r| r.len()));
    for lag in 0..rows {
        write!(w, "{lag},")?;
        if let Some(v) = rho_pm.get(lag) {
            write!(w, "{v}")?;
        }
        write!(w, ",")?;
        if let Some(v) = rho_mh.and_then(|r| r.get(lag)) {
            write!(w, "{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// `path_*.csv`: columns `time,value` for one level-0 snapshot.
pub fn write_path_csv<W: Write>(mut w: W, delta: f64, values: &[f64]) -> std::io::Result<()> {
    writeln!(w, "time,value")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(w, "{},{v}", i as f64 * delta)?;
    }
    Ok(())
}
