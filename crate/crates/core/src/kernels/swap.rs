//! Swap moves between adjacent levels.
//!
//! A swap at pair `(l, l+1)` proposes to hand the hat block of level `l` up
//! to level `l+1`, take the old level-`l+1` state down as the new hat block
//! of level `l`, and regenerate the tilde block. The exact acceptance
//! probability needs pointwise values of the marginal of the level-`l`
//! density, which is only available for analytic special cases
//! ([`exact_swap_accept`]); the production kernels replace the marginal
//! ratio with a self-normalized importance estimate built from `M` reference
//! draws, which preserves the product distribution exactly for every `M`.
//!
//! All weight arithmetic is in log space; the selection index is sampled by
//! Gumbel-max on the log weights.

use rand::Rng;
use rayon::prelude::*;

use crate::density::{log_level_density, DriftModel, ProblemSpec};
use crate::error::{Error, Result};
use crate::hierarchy::{merge_values, split_level, HierarchyState, LevelPath};
use crate::kernels::reference::{Reference, ReferenceConditional};

/// Record of one swap proposal.
#[derive(Clone, Debug)]
pub struct SwapOutcome {
    /// The pair `(l, l+1)` the swap was attempted between.
    pub level_pair: (usize, usize),
    /// Log importance weights of the `M` upward proposals (finite or -inf).
    pub log_weights_u: Vec<f64>,
    /// Log importance weights of the `M` downward references.
    pub log_weights_v: Vec<f64>,
    /// Selected proposal index (0-based position in the weight vectors).
    pub selected: usize,
    /// Acceptance probability, clamped to `[0, 1]`.
    pub acceptance: f64,
    pub accepted: bool,
}

/// `log(sum_j exp(x_j))` with the usual max shift; `-inf` for an empty or
/// all-`-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Sample an index proportionally to `exp(log_w)` by Gumbel-max; `None` when
/// every weight is zero.
pub(crate) fn gumbel_max_select<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &lw) in log_w.iter().enumerate() {
        let u: f64 = rng.gen();
        if lw == f64::NEG_INFINITY {
            continue;
        }
        let g = -(-u.max(f64::MIN_POSITIVE).ln()).ln();
        let score = lw + g;
        if best.map_or(true, |(_, b)| score > b) {
            best = Some((j, score));
        }
    }
    best.map(|(j, _)| j)
}

fn log_pi_level(spec: &ProblemSpec, level: usize, values: Vec<f64>) -> Result<f64> {
    let path = LevelPath {
        level,
        values,
        spacing: spec.spacing(level),
    };
    log_level_density(&path, spec)
}

/// Pieces shared by every swap variant once the proposal blocks exist.
struct SwapSides {
    hat_l: Vec<f64>,
    tilde_l: Vec<f64>,
    xl1: Vec<f64>,
}

fn swap_sides(state: &HierarchyState, l: usize) -> SwapSides {
    let (hat_l, tilde_l) = split_level(&state.levels[l]);
    SwapSides {
        hat_l,
        tilde_l,
        xl1: state.levels[l + 1].values.clone(),
    }
}

/// Evaluate `log pi_l(hat, tilde_j) - log p(tilde_j | hat)` for a batch of
/// tilde blocks. Pure, so the batch runs in parallel.
fn importance_log_weights(
    spec: &ProblemSpec,
    l: usize,
    hat: &[f64],
    tildes: &[Vec<f64>],
    reference: &dyn Reference,
) -> Result<Vec<f64>> {
    tildes
        .par_iter()
        .map(|tilde| {
            let lpi = log_pi_level(spec, l, merge_values(hat, tilde))?;
            Ok(lpi - reference.log_density(tilde, hat))
        })
        .collect()
}

/// Accept/reject and, on accept, exchange the blocks: level `l+1` becomes
/// the old hat of level `l` (bitwise) and level `l` merges the old level
/// `l+1` values with the selected tilde block.
fn finish_swap<R: Rng + ?Sized>(
    state: &mut HierarchyState,
    l: usize,
    sides: SwapSides,
    mut proposals_u: Vec<Vec<f64>>,
    log_weights_u: Vec<f64>,
    log_weights_v: Vec<f64>,
    selected: usize,
    rng: &mut R,
) -> Result<SwapOutcome> {
    let spec = &state.spec;
    let log_ratio = log_pi_level(spec, l + 1, sides.hat_l.clone())?
        + log_sum_exp(&log_weights_u)
        - log_pi_level(spec, l + 1, sides.xl1.clone())?
        - log_sum_exp(&log_weights_v);
    let acceptance = log_ratio.min(0.0).exp();
    debug_assert!((0.0..=1.0).contains(&acceptance));
    let accepted = rng.gen::<f64>() < acceptance;
    if accepted {
        let u_sel = proposals_u.swap_remove(selected);
        state.levels[l].values = merge_values(&sides.xl1, &u_sel);
        state.levels[l + 1].values = sides.hat_l;
    }
    Ok(SwapOutcome {
        level_pair: (l, l + 1),
        log_weights_u,
        log_weights_v,
        selected,
        acceptance,
        accepted,
    })
}

/// Swap with independent reference draws on both sides.
///
/// Draws `U^1..U^M` from the reference conditioned on the level-`l+1`
/// values, weights them by `pi_l / p_l`, selects `J` proportionally to the
/// weights, reuses the current tilde block as `V^J`, draws the remaining
/// `V^j` conditioned on the current hat block, and accepts with the
/// importance-ratio probability. Uses the midpoint-Gaussian reference; see
/// [`swap_pm1_with`] to supply another one.
pub fn swap_pm1<R: Rng>(
    state: &mut HierarchyState,
    l: usize,
    m: usize,
    rng: &mut R,
) -> Result<SwapOutcome> {
    let reference = ReferenceConditional::midpoint_gaussian(&state.spec, l);
    swap_pm1_with(state, l, m, &reference, rng)
}

/// [`swap_pm1`] with an explicit reference conditional.
pub fn swap_pm1_with<R: Rng>(
    state: &mut HierarchyState,
    l: usize,
    m: usize,
    reference: &dyn Reference,
    rng: &mut R,
) -> Result<SwapOutcome> {
    assert!(l < state.coarsest, "swap pair {l}/{} out of range", l + 1);
    assert!(m >= 1);
    let spec = state.spec.clone();
    let sides = swap_sides(state, l);

    let proposals_u: Vec<Vec<f64>> = (0..m).map(|_| reference.sample(&sides.xl1, rng)).collect();
    let log_weights_u = importance_log_weights(&spec, l, &sides.xl1, &proposals_u, reference)?;
    let selected = gumbel_max_select(&log_weights_u, rng).ok_or(Error::AllZeroWeights { level: l })?;

    let proposals_v: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            if j == selected {
                sides.tilde_l.clone()
            } else {
                reference.sample(&sides.hat_l, rng)
            }
        })
        .collect();
    let log_weights_v = importance_log_weights(&spec, l, &sides.hat_l, &proposals_v, reference)?;

    finish_swap(state, l, sides, proposals_u, log_weights_u, log_weights_v, selected, rng)
}

/// The shared-noise simplification: one set of Gaussian noise paths `zeta^m`
/// serves both sides, recentered on the midpoints of whichever hat block is
/// conditioning. This halves the Gaussian draws per acceptance evaluation.
pub fn swap_bridge_simplified<R: Rng + ?Sized>(
    state: &mut HierarchyState,
    l: usize,
    m: usize,
    rng: &mut R,
) -> Result<SwapOutcome> {
    assert!(l < state.coarsest, "swap pair {l}/{} out of range", l + 1);
    assert!(m >= 1);
    let tilde_len = state.levels[l].tilde_len();
    let sd = (0.5 * state.spec.spacing(l)).sqrt();
    let zetas: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            (0..tilde_len)
                .map(|_| sd * rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect()
        })
        .collect();
    swap_simplified_with_zetas(state, l, &zetas, rng)
}

/// Core of the simplified swap with the noise paths supplied by the caller.
pub(crate) fn swap_simplified_with_zetas<R: Rng + ?Sized>(
    state: &mut HierarchyState,
    l: usize,
    zetas: &[Vec<f64>],
    rng: &mut R,
) -> Result<SwapOutcome> {
    let m = zetas.len();
    let spec = state.spec.clone();
    let reference = ReferenceConditional::midpoint_gaussian(&spec, l);
    let sides = swap_sides(state, l);

    let recenter = |hat: &[f64], zeta: &[f64]| -> Vec<f64> {
        zeta.iter()
            .enumerate()
            .map(|(k, &z)| z + 0.5 * (hat[k] + hat[k + 1]))
            .collect()
    };

    let proposals_u: Vec<Vec<f64>> = zetas.iter().map(|z| recenter(&sides.xl1, z)).collect();
    let log_weights_u = importance_log_weights(&spec, l, &sides.xl1, &proposals_u, &reference)?;
    let selected = gumbel_max_select(&log_weights_u, rng).ok_or(Error::AllZeroWeights { level: l })?;

    let proposals_v: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            if j == selected {
                sides.tilde_l.clone()
            } else {
                recenter(&sides.hat_l, &zetas[j])
            }
        })
        .collect();
    let log_weights_v = importance_log_weights(&spec, l, &sides.hat_l, &proposals_v, &reference)?;

    finish_swap(state, l, sides, proposals_u, log_weights_u, log_weights_v, selected, rng)
}

/// Pointwise evaluator of the log marginal of a level density over its
/// tilde block. Only special cases admit one.
pub trait MarginalOracle {
    /// `log( integral of pi_l(hat, tilde) d tilde )` at a hat-shaped point
    /// (level `l+1` layout), including the constant from the integration.
    fn log_marginal(&self, hat: &[f64], level: usize) -> Result<f64>;
}

/// Exact marginal for zero-drift, unit-diffusion problems: integrating the
/// Gaussian chain over the tilde sites leaves the coarsened chain times
/// `(pi * dt_l)^{tilde/2}`. Observation terms attach to hat sites only, so
/// the identity also covers zero-drift smoothing.
pub struct AnalyticGaussianMarginal<'a> {
    spec: &'a ProblemSpec,
}

impl<'a> AnalyticGaussianMarginal<'a> {
    pub fn new(spec: &'a ProblemSpec) -> Result<Self> {
        match spec.model {
            DriftModel::ZeroDrift => Ok(Self { spec }),
            _ => Err(Error::OracleUnavailable(
                "analytic marginal needs the zero-drift model".into(),
            )),
        }
    }
}

impl MarginalOracle for AnalyticGaussianMarginal<'_> {
    fn log_marginal(&self, hat: &[f64], level: usize) -> Result<f64> {
        let tilde_len = hat.len() - 1;
        let dt = self.spec.spacing(level);
        let coarse = log_pi_level(self.spec, level + 1, hat.to_vec())?;
        Ok(coarse + 0.5 * tilde_len as f64 * (std::f64::consts::PI * dt).ln())
    }
}

/// Brute-force marginal by tensor-grid quadrature over the tilde block.
/// Only feasible for a few tilde dimensions; rejects larger requests.
pub struct QuadratureMarginal<'a> {
    pub spec: &'a ProblemSpec,
    pub lo: f64,
    pub hi: f64,
    pub points_per_dim: usize,
    pub max_dims: usize,
}

impl<'a> QuadratureMarginal<'a> {
    pub fn new(spec: &'a ProblemSpec, lo: f64, hi: f64, points_per_dim: usize) -> Self {
        Self {
            spec,
            lo,
            hi,
            points_per_dim,
            max_dims: 3,
        }
    }
}

impl MarginalOracle for QuadratureMarginal<'_> {
    fn log_marginal(&self, hat: &[f64], level: usize) -> Result<f64> {
        let dims = hat.len() - 1;
        if dims > self.max_dims {
            return Err(Error::OracleUnavailable(format!(
                "quadrature over {dims} tilde dimensions exceeds the {} cap",
                self.max_dims
            )));
        }
        let h = (self.hi - self.lo) / (self.points_per_dim - 1) as f64;
        let mut idx = vec![0usize; dims];
        let mut tilde = vec![0.0; dims];
        // Streaming log-sum-exp over the full tensor grid.
        let (mut max, mut sum) = (f64::NEG_INFINITY, 0.0);
        loop {
            for (d, &i) in idx.iter().enumerate() {
                tilde[d] = self.lo + h * i as f64;
            }
            let lp = log_pi_level(self.spec, level, merge_values(hat, &tilde))?;
            if lp > max {
                sum = sum * (max - lp).exp() + 1.0;
                max = lp;
            } else {
                sum += (lp - max).exp();
            }
            // Advance the multi-index.
            let mut d = 0;
            loop {
                if d == dims {
                    return Ok(max + sum.ln() + dims as f64 * h.ln());
                }
                idx[d] += 1;
                if idx[d] < self.points_per_dim {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
    }
}

/// The exact swap acceptance probability
/// `min{1, pibar_l(x_{l+1}) pi_{l+1}(hat_l) / (pibar_l(hat_l) pi_{l+1}(x_{l+1}))}`,
/// with the marginal `pibar_l` evaluated through the supplied oracle.
pub fn exact_swap_accept(state: &HierarchyState, l: usize, oracle: &dyn MarginalOracle) -> Result<f64> {
    assert!(l < state.coarsest);
    let spec = &state.spec;
    let (hat_l, _) = split_level(&state.levels[l]);
    let xl1 = state.levels[l + 1].values.clone();
    let log_ratio = oracle.log_marginal(&xl1, l)? + log_pi_level(spec, l + 1, hat_l.clone())?
        - oracle.log_marginal(&hat_l, l)?
        - log_pi_level(spec, l + 1, xl1)?;
    Ok(log_ratio.min(0.0).exp())
}
