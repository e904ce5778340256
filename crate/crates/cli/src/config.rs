//! Run configuration: a flat key = value file with sections (TOML grammar),
//! command-line overrides, and full validation.
//!
//! Every field has an experiment-specific default, and the fully resolved
//! configuration is echoed into `summary.json` so a run can be reproduced
//! from its own output.

use std::path::PathBuf;
use std::sync::Arc;

use pmmc::density::{DriftModel, ObservationModel, ProblemSpec};
use pmmc::kernels::{MSchedule, SwapVariant};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    /// Malformed config text; the message carries the line/column and field.
    #[error("config parse error: {0}")]
    Parse(String),
    /// A field failed its range check.
    #[error("config range error: {field}: {message}")]
    Range { field: &'static str, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Bridge,
    Smoothing,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DoubleWell,
    ZeroDrift,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKindChoice {
    Bridge,
    Smoothing,
}

/// Per-level proposal scales: derived from the level spacing or explicit.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StepScales {
    Auto,
    Explicit(Vec<f64>),
}

/// Fully resolved, validated run configuration.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub kind: ProblemKindChoice,
    pub model: ModelKind,
    pub t_final: f64,
    pub n: usize,
    pub levels: usize,
    pub alpha: f64,
    pub iters: u64,
    pub burn_in_fraction: f64,
    pub seed: u64,
    pub m_schedule: MSchedule,
    pub variant: SwapVariant,
    pub step_scales: StepScales,
    pub z_minus: f64,
    pub z_plus: f64,
    /// Observation times in time units (smoothing only).
    pub observation_times: Vec<f64>,
    pub observation_values: Vec<f64>,
    pub noise_variance: f64,
    pub output_dir: PathBuf,
    pub strict: bool,
    pub baseline_mh: bool,
    /// Baseline iteration count; 0 resolves to `10 * iters`.
    pub baseline_iters: u64,
    /// Write a full level-0 snapshot every this many recorded iterations
    /// (0 disables periodic snapshots; the final path is always written).
    pub snapshot_every: u64,
}

/// Command-line overrides; any `Some` wins over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub experiment: Option<Experiment>,
    pub seed: Option<u64>,
    pub iters: Option<u64>,
    pub alpha: Option<f64>,
    pub levels: Option<usize>,
    pub variant: Option<SwapVariant>,
    pub output_dir: Option<PathBuf>,
    pub baseline_mh: bool,
    pub strict: bool,
}

// Raw (file-shaped) view with everything optional.

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<Experiment>,
    seed: Option<u64>,
    iters: Option<u64>,
    alpha: Option<f64>,
    #[serde(default)]
    problem: RawProblem,
    #[serde(default)]
    kernel: RawKernel,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    kind: Option<ProblemKindChoice>,
    model: Option<ModelKind>,
    t_final: Option<f64>,
    n: Option<usize>,
    levels: Option<usize>,
    z_minus: Option<f64>,
    z_plus: Option<f64>,
    observation_times: Option<Vec<f64>>,
    observation_values: Option<Vec<f64>>,
    noise_variance: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    variant: Option<SwapVariant>,
    m_schedule: Option<String>,
    m_constant: Option<usize>,
    step_scales: Option<toml::Value>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    burn_in_fraction: Option<f64>,
    snapshot_every: Option<u64>,
    strict: Option<bool>,
    baseline_mh: Option<bool>,
    baseline_iters: Option<u64>,
}

/// Parse and validate a config file body (empty text is a valid file: every
/// field defaults). Overrides are applied before validation.
pub fn validate_config(text: &str, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    resolve(raw, overrides)
}

fn resolve(raw: RawConfig, ov: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let experiment = ov.experiment.or(raw.experiment).unwrap_or(Experiment::Bridge);

    let kind = raw.problem.kind.unwrap_or(match experiment {
        Experiment::Smoothing => ProblemKindChoice::Smoothing,
        Experiment::Bridge | Experiment::Custom => ProblemKindChoice::Bridge,
    });
    if experiment != Experiment::Custom {
        let natural = matches!(
            (experiment, kind),
            (Experiment::Bridge, ProblemKindChoice::Bridge)
                | (Experiment::Smoothing, ProblemKindChoice::Smoothing)
        );
        if !natural {
            return Err(ConfigError::Range {
                field: "problem.kind",
                message: format!("{kind:?} contradicts experiment {experiment:?}; use experiment = \"custom\""),
            });
        }
    }

    let t_final = raw.problem.t_final.unwrap_or(10.0);
    if !(t_final > 0.0) {
        return Err(ConfigError::Range {
            field: "problem.t_final",
            message: format!("{t_final} must be > 0"),
        });
    }
    let n = raw.problem.n.unwrap_or(10240);
    let levels = ov.levels.or(raw.problem.levels).unwrap_or(match kind {
        ProblemKindChoice::Bridge => 9,
        ProblemKindChoice::Smoothing => 7,
    });
    if levels == 0 || levels >= 60 {
        return Err(ConfigError::Range {
            field: "problem.levels",
            message: format!("{levels} must be in 1..60"),
        });
    }
    // The hierarchy needs N to coarsen dyadically down to at least two
    // intervals at the top level.
    let step = 1usize << levels;
    if n < 2 || n % step != 0 || n / step < 2 {
        return Err(ConfigError::Range {
            field: "problem.n",
            message: format!("{n} must be a multiple of 2^levels = {step} with at least 2 coarse intervals"),
        });
    }

    let alpha = ov.alpha.or(raw.alpha).unwrap_or(0.5);
    if !(0.0..1.0).contains(&alpha) {
        return Err(ConfigError::Range {
            field: "alpha",
            message: format!("{alpha} must satisfy 0 <= alpha < 1"),
        });
    }

    let burn_in_fraction = raw.output.burn_in_fraction.unwrap_or(0.1);
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return Err(ConfigError::Range {
            field: "output.burn_in_fraction",
            message: format!("{burn_in_fraction} must satisfy 0 <= f < 1"),
        });
    }

    let m_schedule = match raw.kernel.m_schedule.as_deref() {
        None => match kind {
            ProblemKindChoice::Bridge => MSchedule::Linear,
            ProblemKindChoice::Smoothing => MSchedule::Dyadic,
        },
        Some("linear") => MSchedule::Linear,
        Some("dyadic") => MSchedule::Dyadic,
        Some("constant") => {
            let c = raw.kernel.m_constant.unwrap_or(1);
            if c == 0 {
                return Err(ConfigError::Range {
                    field: "kernel.m_constant",
                    message: "must be >= 1".into(),
                });
            }
            MSchedule::Constant(c)
        }
        Some(other) => {
            return Err(ConfigError::Range {
                field: "kernel.m_schedule",
                message: format!("unknown schedule {other:?}; expected linear, dyadic or constant"),
            })
        }
    };

    let step_scales = match &raw.kernel.step_scales {
        None => StepScales::Auto,
        Some(toml::Value::String(s)) if s == "auto" => StepScales::Auto,
        Some(toml::Value::Array(arr)) => {
            let mut scales = Vec::with_capacity(arr.len());
            for v in arr {
                match v.as_float().or_else(|| v.as_integer().map(|i| i as f64)) {
                    Some(x) if x > 0.0 => scales.push(x),
                    _ => {
                        return Err(ConfigError::Range {
                            field: "kernel.step_scales",
                            message: "entries must be positive numbers".into(),
                        })
                    }
                }
            }
            if scales.len() != levels + 1 {
                return Err(ConfigError::Range {
                    field: "kernel.step_scales",
                    message: format!("{} entries given but levels + 1 = {} needed", scales.len(), levels + 1),
                });
            }
            StepScales::Explicit(scales)
        }
        Some(other) => {
            return Err(ConfigError::Range {
                field: "kernel.step_scales",
                message: format!("expected \"auto\" or an array, got {other}"),
            })
        }
    };

    let (observation_times, observation_values) = match kind {
        ProblemKindChoice::Smoothing => {
            let times = raw.problem.observation_times.unwrap_or_else(|| (0..=10).map(f64::from).collect());
            let values = raw
                .problem
                .observation_values
                .unwrap_or_else(|| (0..=10).map(|j| if j <= 5 { -1.0 } else { 1.0 }).collect());
            if times.len() != values.len() {
                return Err(ConfigError::Range {
                    field: "problem.observation_values",
                    message: format!("{} values for {} times", values.len(), times.len()),
                });
            }
            for &t in &times {
                let idx = t * n as f64 / t_final;
                if (idx - idx.round()).abs() > 1e-9 {
                    return Err(ConfigError::Range {
                        field: "problem.observation_times",
                        message: format!("time {t} does not land on the fine mesh"),
                    });
                }
            }
            (times, values)
        }
        ProblemKindChoice::Bridge => (Vec::new(), Vec::new()),
    };

    let noise_variance = raw.problem.noise_variance.unwrap_or(0.01);
    if !(noise_variance > 0.0) {
        return Err(ConfigError::Range {
            field: "problem.noise_variance",
            message: format!("{noise_variance} must be > 0"),
        });
    }

    let config = ExperimentConfig {
        experiment,
        kind,
        model: raw.problem.model.unwrap_or(ModelKind::DoubleWell),
        t_final,
        n,
        levels,
        alpha,
        iters: ov.iters.or(raw.iters).unwrap_or(20_000),
        burn_in_fraction,
        seed: ov.seed.or(raw.seed).unwrap_or(20_060_616),
        m_schedule,
        variant: ov.variant.or(raw.kernel.variant).unwrap_or(SwapVariant::Simplified),
        step_scales,
        z_minus: raw.problem.z_minus.unwrap_or(0.0),
        z_plus: raw.problem.z_plus.unwrap_or(0.0),
        observation_times,
        observation_values,
        noise_variance,
        output_dir: ov
            .output_dir
            .clone()
            .or(raw.output.dir)
            .unwrap_or_else(|| PathBuf::from("pmrun-out")),
        strict: ov.strict || raw.output.strict.unwrap_or(false),
        baseline_mh: ov.baseline_mh || raw.output.baseline_mh.unwrap_or(false),
        baseline_iters: raw.output.baseline_iters.unwrap_or(0),
        snapshot_every: raw.output.snapshot_every.unwrap_or(0),
    };

    // Smoothing observations must sit on the coarsest mesh; surface that at
    // validation time rather than at run time.
    if config.kind == ProblemKindChoice::Smoothing {
        config
            .problem_spec()
            .map_err(|e| ConfigError::Range {
                field: "problem.observation_times",
                message: e.to_string(),
            })
            .and_then(|spec| {
                spec.observations()
                    .expect("smoothing spec has observations")
                    .check_on_mesh(config.levels)
                    .map_err(|e| ConfigError::Range {
                        field: "problem.observation_times",
                        message: e.to_string(),
                    })
            })?;
    }
    Ok(config)
}

impl ExperimentConfig {
    pub fn drift_model(&self) -> DriftModel {
        match self.model {
            ModelKind::DoubleWell => DriftModel::DoubleWell,
            ModelKind::ZeroDrift => DriftModel::ZeroDrift,
        }
    }

    /// Build the problem this configuration describes.
    pub fn problem_spec(&self) -> pmmc::Result<ProblemSpec> {
        match self.kind {
            ProblemKindChoice::Bridge => {
                ProblemSpec::bridge(self.drift_model(), self.t_final, self.n, self.z_minus, self.z_plus)
            }
            ProblemKindChoice::Smoothing => {
                let indices: Vec<usize> = self
                    .observation_times
                    .iter()
                    .map(|&t| (t * self.n as f64 / self.t_final).round() as usize)
                    .collect();
                let obs = match self.model {
                    // Identity link, Gaussian noise, double-well-stationary
                    // initial density.
                    ModelKind::DoubleWell | ModelKind::ZeroDrift => ObservationModel::gaussian_identity(
                        indices,
                        self.observation_values.clone(),
                        self.n,
                        self.noise_variance,
                    )?,
                };
                ProblemSpec::smoothing(self.drift_model(), self.t_final, self.n, obs)
            }
        }
    }

    /// Resolved per-level proposal scales.
    pub fn resolved_step_scales(&self, spec: &ProblemSpec) -> Vec<f64> {
        match &self.step_scales {
            StepScales::Auto => pmmc::kernels::PmConfig::auto_step_scales(spec, self.levels),
            StepScales::Explicit(v) => v.clone(),
        }
    }

    /// Baseline iteration count after resolving the 0 = "10x" convention.
    pub fn resolved_baseline_iters(&self) -> u64 {
        if self.baseline_iters == 0 {
            self.iters.saturating_mul(10)
        } else {
            self.baseline_iters
        }
    }
}

/// Keep `link` closures out of the config layer; custom links would go here.
#[allow(dead_code)]
fn identity_link() -> Arc<dyn Fn(f64) -> f64 + Send + Sync> {
    Arc::new(|h| h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        validate_config(text, &Overrides::default())
    }

    #[test]
    fn minimal_bridge_config_matches_experiment_defaults() {
        let c = parse("experiment = \"bridge\"").unwrap();
        assert_eq!(c.t_final, 10.0);
        assert_eq!(c.n, 10240);
        assert_eq!(c.levels, 9);
        assert_eq!(c.variant, SwapVariant::Simplified);
        assert!(matches!(c.m_schedule, MSchedule::Linear));
        assert_eq!(c.alpha, 0.5);
        assert_eq!((c.z_minus, c.z_plus), (0.0, 0.0));
        let spec = c.problem_spec().unwrap();
        assert_eq!(spec.delta, 2f64.powi(-10));
    }

    #[test]
    fn smoothing_defaults_follow_the_observation_setup() {
        let c = parse("experiment = \"smoothing\"").unwrap();
        assert_eq!(c.levels, 7);
        assert!(matches!(c.m_schedule, MSchedule::Dyadic));
        assert_eq!(c.observation_times.len(), 11);
        assert_eq!(c.observation_values[..6], [-1.0; 6]);
        assert_eq!(c.observation_values[6..], [1.0; 5]);
        assert_eq!(c.noise_variance, 0.01);
        let spec = c.problem_spec().unwrap();
        let obs = spec.observations().unwrap();
        assert_eq!(obs.times, (0..=10).map(|j| j * 1024).collect::<Vec<_>>());
    }

    #[test]
    fn alpha_one_is_rejected() {
        let err = parse("experiment = \"bridge\"\nalpha = 1.0").unwrap_err();
        match err {
            ConfigError::Range { field, .. } => assert_eq!(field, "alpha"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_dyadic_n_is_rejected() {
        let err = parse("experiment = \"bridge\"\n[problem]\nn = 10000").unwrap_err();
        match err {
            ConfigError::Range { field, .. } => assert_eq!(field, "problem.n"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_name_the_location() {
        let err = parse("experiment = \"bridge\"\nalpha = ").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("line"), "message was: {msg}");
        let err = parse("experiment = \"bridge\"\nnot_a_field = 1").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
    }

    #[test]
    fn overrides_beat_file_values() {
        let ov = Overrides {
            seed: Some(7),
            iters: Some(123),
            alpha: Some(0.25),
            variant: Some(SwapVariant::Pm2),
            ..Default::default()
        };
        let c = validate_config("experiment = \"bridge\"\nseed = 1\niters = 5\nalpha = 0.9", &ov).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.iters, 123);
        assert_eq!(c.alpha, 0.25);
        assert_eq!(c.variant, SwapVariant::Pm2);
    }

    #[test]
    fn observation_times_must_hit_the_mesh_and_coarsest_level() {
        let err = parse(
            "experiment = \"smoothing\"\n[problem]\nobservation_times = [0.0, 0.3, 10.0]\nobservation_values = [0.0, 0.0, 0.0]",
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::Range { field: "problem.observation_times", .. }));
        // 5/1024 lands on the fine mesh but not on the coarsest one.
        let err = parse(
            "experiment = \"smoothing\"\n[problem]\nobservation_times = [0.0, 0.0048828125, 10.0]\nobservation_values = [0.0, 0.0, 0.0]",
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::Range { field: "problem.observation_times", .. }));
    }

    #[test]
    fn explicit_step_scales_must_cover_every_level() {
        let err = parse("experiment = \"bridge\"\n[kernel]\nstep_scales = [0.1, 0.2]").unwrap_err();
        assert!(matches!(err, ConfigError::Range { field: "kernel.step_scales", .. }));
        let ok = parse(&format!(
            "experiment = \"bridge\"\n[kernel]\nstep_scales = [{}]",
            vec!["0.1"; 10].join(", ")
        ))
        .unwrap();
        match ok.step_scales {
            StepScales::Explicit(v) => assert_eq!(v.len(), 10),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constant_schedule_requires_positive_m() {
        let err = parse("experiment = \"bridge\"\n[kernel]\nm_schedule = \"constant\"\nm_constant = 0").unwrap_err();
        assert!(matches!(err, ConfigError::Range { field: "kernel.m_constant", .. }));
        let ok = parse("experiment = \"bridge\"\n[kernel]\nm_schedule = \"constant\"\nm_constant = 4").unwrap();
        assert!(matches!(ok.m_schedule, MSchedule::Constant(4)));
    }

    #[test]
    fn custom_experiment_allows_mixed_choices() {
        let c = parse(
            "experiment = \"custom\"\n[problem]\nkind = \"bridge\"\nmodel = \"zero_drift\"\nt_final = 1.0\nn = 64\nlevels = 3",
        )
        .unwrap();
        assert_eq!(c.model, ModelKind::ZeroDrift);
        assert_eq!(c.n, 64);
        // A non-custom experiment may not contradict its kind.
        let err = parse("experiment = \"bridge\"\n[problem]\nkind = \"smoothing\"").unwrap_err();
        assert!(matches!(err, ConfigError::Range { field: "problem.kind", .. }));
    }
}
