//! SDE model and unnormalized log path densities.
//!
//! The continuous problem is `dZ = f(Z) dt + sigma(Z) dW`, discretized with
//! the linearly implicit Euler scheme. Because the update is linear in the
//! new point it can be solved in closed form, and the resulting one-step
//! transition is Gaussian: the log path density is a sum of quadratic
//! potentials [`v_potential`], one per mesh interval. Coarser levels use the
//! same potential on a dyadically thinned mesh with the correspondingly
//! larger time step.
//!
//! Every density here is unnormalized (log space). Normalization constants
//! are never computed; all consumers are ratio-based.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hierarchy::LevelPath;

/// A real function of one real variable, shared across threads.
pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Threshold below which the implicit-Euler denominator `1 - dt f'(x)` is
/// treated as degenerate. Failing loudly beats producing huge silent steps.
pub const DEGENERATE_DENOM: f64 = 1e-12;

/// Drift and diffusion coefficients of the SDE, with the analytic drift
/// derivative required by the linearly implicit scheme.
#[derive(Clone)]
pub enum DriftModel {
    /// `f = 0`, `sigma = 1`: Brownian paths, every level density Gaussian.
    ZeroDrift,
    /// Double-well drift `f(x) = -4x(x^2 - 1)` with unit diffusion.
    DoubleWell,
    /// User-supplied coefficients.
    Custom {
        f: RealFn,
        f_prime: RealFn,
        sigma: RealFn,
    },
}

impl DriftModel {
    #[inline]
    pub fn f(&self, x: f64) -> f64 {
        match self {
            DriftModel::ZeroDrift => 0.0,
            DriftModel::DoubleWell => -4.0 * x * (x * x - 1.0),
            DriftModel::Custom { f, .. } => f(x),
        }
    }

    #[inline]
    pub fn f_prime(&self, x: f64) -> f64 {
        match self {
            DriftModel::ZeroDrift => 0.0,
            DriftModel::DoubleWell => -12.0 * x * x + 4.0,
            DriftModel::Custom { f_prime, .. } => f_prime(x),
        }
    }

    #[inline]
    pub fn sigma(&self, x: f64) -> f64 {
        match self {
            DriftModel::ZeroDrift | DriftModel::DoubleWell => 1.0,
            DriftModel::Custom { sigma, .. } => sigma(x),
        }
    }

    /// Check that `f_prime` is the derivative of `f` by central finite
    /// differences on a grid over `|x| <= 3` (step `1e-5`, relative error
    /// below `1e-6` with an absolute floor of 1 near zeros of `f'`).
    pub fn check_derivative(&self) -> Result<()> {
        let h = 1e-5;
        for i in 0..=60 {
            let x = -3.0 + 0.1 * i as f64;
            let fd = (self.f(x + h) - self.f(x - h)) / (2.0 * h);
            let stated = self.f_prime(x);
            if (fd - stated).abs() > 1e-6 * stated.abs().max(1.0) {
                return Err(Error::DerivativeMismatch {
                    x,
                    stated,
                    estimated: fd,
                });
            }
        }
        Ok(())
    }
}

impl std::fmt::Debug for DriftModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DriftModel::ZeroDrift => write!(f, "ZeroDrift"),
            DriftModel::DoubleWell => write!(f, "DoubleWell"),
            DriftModel::Custom { .. } => write!(f, "Custom"),
        }
    }
}

/// Noisy observations of the path: times (as fine-mesh indices), observed
/// values, the observation link `r`, the log noise density `log mu`, and the
/// log initial density `log rho`.
#[derive(Clone)]
pub struct ObservationModel {
    pub times: Vec<usize>,
    pub values: Vec<f64>,
    pub link: RealFn,
    pub noise_log_density: RealFn,
    pub initial_log_density: RealFn,
}

impl ObservationModel {
    /// Validates ordering and endpoint constraints: indices strictly
    /// increasing, first at 0, last at `n_fine`.
    pub fn new(
        times: Vec<usize>,
        values: Vec<f64>,
        n_fine: usize,
        link: RealFn,
        noise_log_density: RealFn,
        initial_log_density: RealFn,
    ) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidObservations(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.is_empty() || times[0] != 0 || *times.last().unwrap() != n_fine {
            return Err(Error::InvalidObservations(format!(
                "times must start at 0 and end at N = {n_fine}"
            )));
        }
        if !times.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidObservations(
                "times must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            times,
            values,
            link,
            noise_log_density,
            initial_log_density,
        })
    }

    /// Gaussian observation noise `mu = N(0, variance)`, identity link, and
    /// double-well-stationary initial density `rho(x) ∝ exp(-(x^2-1)^2)`.
    pub fn gaussian_identity(times: Vec<usize>, values: Vec<f64>, n_fine: usize, variance: f64) -> Result<Self> {
        let inv2v = 1.0 / (2.0 * variance);
        let norm = 0.5 * (2.0 * std::f64::consts::PI * variance).ln();
        Self::new(
            times,
            values,
            n_fine,
            Arc::new(|h| h),
            Arc::new(move |e| -e * e * inv2v - norm),
            Arc::new(|x| {
                let w = x * x - 1.0;
                -w * w
            }),
        )
    }

    /// Check that every observation index is divisible by `2^levels`, i.e.
    /// that observations lie on the coarsest mesh.
    pub fn check_on_mesh(&self, levels: usize) -> Result<()> {
        let step = 1usize << levels;
        for &t in &self.times {
            if t % step != 0 {
                return Err(Error::ObservationOffMesh { index: t, levels });
            }
        }
        Ok(())
    }

    /// Log observation term at fine-mesh index `t`, or `None` if `t` is not
    /// an observation time. The term is `log mu(x - r(h))` for the observed
    /// value `h` at `t`.
    #[inline]
    pub fn log_term_at(&self, t: usize, x: f64) -> Option<f64> {
        let j = self.times.binary_search(&t).ok()?;
        Some((self.noise_log_density)(x - (self.link)(self.values[j])))
    }
}

impl std::fmt::Debug for ObservationModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ObservationModel")
            .field("times", &self.times)
            .field("values", &self.values)
            .finish_non_exhaustive()
    }
}

/// What conditions the paths: pinned endpoints (bridge) or noisy
/// observations (smoothing).
#[derive(Clone, Debug)]
pub enum Boundary {
    Bridge { z_minus: f64, z_plus: f64 },
    Smoothing(ObservationModel),
}

/// Discriminant of [`Boundary`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    Bridge,
    Smoothing,
}

/// The full conditional path sampling problem: model, horizon, fine mesh and
/// boundary data. `delta = t_final / n_fine` is stored exactly as computed.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub model: DriftModel,
    pub t_final: f64,
    pub n_fine: usize,
    pub delta: f64,
    pub boundary: Boundary,
}

impl ProblemSpec {
    pub fn bridge(model: DriftModel, t_final: f64, n_fine: usize, z_minus: f64, z_plus: f64) -> Result<Self> {
        Self::new(model, t_final, n_fine, Boundary::Bridge { z_minus, z_plus })
    }

    pub fn smoothing(model: DriftModel, t_final: f64, n_fine: usize, obs: ObservationModel) -> Result<Self> {
        Self::new(model, t_final, n_fine, Boundary::Smoothing(obs))
    }

    pub fn new(model: DriftModel, t_final: f64, n_fine: usize, boundary: Boundary) -> Result<Self> {
        if !(t_final > 0.0) {
            return Err(Error::InvalidProblem(format!("t_final = {t_final} must be > 0")));
        }
        if n_fine < 2 || n_fine % 2 != 0 {
            return Err(Error::InvalidProblem(format!(
                "n_fine = {n_fine} must be an even integer >= 2"
            )));
        }
        if let Boundary::Smoothing(obs) = &boundary {
            // Constructor-level consistency; mesh divisibility is checked
            // against the actual level count at hierarchy initialization.
            if *obs.times.last().unwrap() != n_fine {
                return Err(Error::InvalidObservations(format!(
                    "last observation index {} != N = {}",
                    obs.times.last().unwrap(),
                    n_fine
                )));
            }
        }
        let delta = t_final / n_fine as f64;
        Ok(Self {
            model,
            t_final,
            n_fine,
            delta,
            boundary,
        })
    }

    pub fn kind(&self) -> ProblemKind {
        match self.boundary {
            Boundary::Bridge { .. } => ProblemKind::Bridge,
            Boundary::Smoothing(_) => ProblemKind::Smoothing,
        }
    }

    /// Mesh spacing at coarsening level `l`: `2^l * delta`.
    #[inline]
    pub fn spacing(&self, level: usize) -> f64 {
        (1u64 << level) as f64 * self.delta
    }

    /// Number of mesh values at level `l`: `N / 2^l + 1`.
    pub fn mesh_len(&self, level: usize) -> Result<usize> {
        let step = 1usize << level;
        if self.n_fine % step != 0 {
            return Err(Error::Divisibility {
                n_fine: self.n_fine,
                levels: level,
            });
        }
        Ok(self.n_fine / step + 1)
    }

    pub fn observations(&self) -> Option<&ObservationModel> {
        match &self.boundary {
            Boundary::Smoothing(obs) => Some(obs),
            Boundary::Bridge { .. } => None,
        }
    }
}

/// One step of the linearly implicit Euler scheme, solved in closed form:
///
/// `x' = x + (f(x) dt + sigma(x) sqrt(dt) xi) / (1 - dt f'(x))`.
///
/// Errors when the denominator is smaller than [`DEGENERATE_DENOM`] in
/// magnitude.
pub fn lie_step(x: f64, xi: f64, dt: f64, model: &DriftModel) -> Result<f64> {
    let denom = 1.0 - dt * model.f_prime(x);
    if denom.abs() < DEGENERATE_DENOM {
        return Err(Error::DegenerateDenominator { x, dt, denom });
    }
    Ok(x + (model.f(x) * dt + model.sigma(x) * dt.sqrt() * xi) / denom)
}

/// The quadratic potential of one mesh interval:
///
/// `V(x, y, dt) = [(1 - dt f'(x))(y - x) + dt f(x)]^2 / (2 sigma(x)^2 dt)`.
///
/// Minus the sum of these over all intervals is the unnormalized log path
/// density of the implicit-Euler chain. Always nonnegative.
#[inline]
pub fn v_potential(x: f64, y: f64, dt: f64, model: &DriftModel) -> f64 {
    debug_assert!(dt > 0.0);
    let num = (1.0 - dt * model.f_prime(x)) * (y - x) + dt * model.f(x);
    let s = model.sigma(x);
    debug_assert!(s > 0.0);
    num * num / (2.0 * s * s * dt)
}

/// Unnormalized log density of a level-`l` path.
///
/// For both problems this is `-sum_k V(x(k), x(k+1), 2^l delta)` over the
/// level's intervals. Smoothing adds `log rho(x(0))` and the observation
/// terms `log mu(x(s_j) - r(h(j)))`; bridge paths must carry the pinned
/// endpoints. The value is a log density up to a level-dependent constant
/// that is never computed.
pub fn log_level_density(path: &LevelPath, spec: &ProblemSpec) -> Result<f64> {
    let expected = spec.mesh_len(path.level)?;
    if path.values.len() != expected {
        return Err(Error::MeshMismatch {
            level: path.level,
            n_fine: spec.n_fine,
            expected,
            got: path.values.len(),
        });
    }
    let dt = spec.spacing(path.level);
    let v = &path.values;
    match &spec.boundary {
        Boundary::Bridge { z_minus, z_plus } => {
            if v[0] != *z_minus || v[v.len() - 1] != *z_plus {
                return Err(Error::BoundaryMismatch {
                    got_left: v[0],
                    got_right: v[v.len() - 1],
                    z_minus: *z_minus,
                    z_plus: *z_plus,
                });
            }
        }
        Boundary::Smoothing(_) => {}
    }

    let mut logp = 0.0;
    for k in 0..v.len() - 1 {
        logp -= v_potential(v[k], v[k + 1], dt, &spec.model);
    }
    if let Some(obs) = spec.observations() {
        logp += (obs.initial_log_density)(v[0]);
        let scale = 1usize << path.level;
        for (j, &t) in obs.times.iter().enumerate() {
            debug_assert_eq!(t % scale, 0, "observation off the level mesh");
            let x = v[t / scale];
            logp += (obs.noise_log_density)(x - (obs.link)(obs.values[j]));
        }
    }
    Ok(logp)
}
