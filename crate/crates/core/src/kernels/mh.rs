//! Per-level Metropolis–Hastings sweeps with single-site Gaussian random
//! walk proposals.
//!
//! Each sweep visits every free site once in random-permutation order. The
//! acceptance ratio only needs the two potential terms touching the site
//! (plus observation terms at observed sites), so a sweep is linear in the
//! path length. Symmetric proposals give detailed balance per site.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::density::{ProblemKind, ProblemSpec};
use crate::hierarchy::LevelPath;

/// Acceptance bookkeeping for one sweep.
#[derive(Clone, Copy, Debug, Default)]
pub struct SweepStats {
    pub proposed: usize,
    pub accepted: usize,
}

impl SweepStats {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// The log-density terms involving site `site` only, evaluated with the
/// candidate value `x` in place of `values[site]`.
#[inline]
fn local_terms(values: &[f64], site: usize, x: f64, level: usize, spec: &ProblemSpec) -> f64 {
    let dt = spec.spacing(level);
    let model = &spec.model;
    let mut lp = 0.0;
    if site > 0 {
        lp -= crate::density::v_potential(values[site - 1], x, dt, model);
    }
    if site + 1 < values.len() {
        lp -= crate::density::v_potential(x, values[site + 1], dt, model);
    }
    if let Some(obs) = spec.observations() {
        if site == 0 {
            lp += (obs.initial_log_density)(x);
        }
        if let Some(term) = obs.log_term_at(site << level, x) {
            lp += term;
        }
    }
    lp
}

/// Log-density terms of the current path restricted to one site; the
/// difference of two of these is the single-site acceptance log-ratio.
pub fn site_local_log_density(path: &LevelPath, spec: &ProblemSpec, site: usize) -> f64 {
    local_terms(&path.values, site, path.values[site], path.level, spec)
}

/// Range of sites a sweep may move: interior only for bridges (endpoints
/// are pinned), every site for smoothing.
pub fn free_sites(path: &LevelPath, spec: &ProblemSpec) -> std::ops::Range<usize> {
    match spec.kind() {
        ProblemKind::Bridge => 1..path.values.len() - 1,
        ProblemKind::Smoothing => 0..path.values.len(),
    }
}

/// One full sweep of single-site Metropolis updates over all free sites in
/// random-permutation order. Proposals are `x + step_scale * xi` with `xi`
/// standard normal.
pub fn mh_sweep<R: Rng + ?Sized>(
    path: &mut LevelPath,
    spec: &ProblemSpec,
    step_scale: f64,
    rng: &mut R,
) -> SweepStats {
    debug_assert!(step_scale >= 0.0);
    let level = path.level;
    let mut order: Vec<u32> = free_sites(path, spec).map(|s| s as u32).collect();
    order.shuffle(rng);

    let mut stats = SweepStats::default();
    for &site in &order {
        let site = site as usize;
        let old = path.values[site];
        let xi: f64 = rng.sample(StandardNormal);
        let proposed = old + step_scale * xi;
        let delta = local_terms(&path.values, site, proposed, level, spec)
            - local_terms(&path.values, site, old, level, spec);
        let u: f64 = rng.gen();
        stats.proposed += 1;
        if u.ln() < delta {
            path.values[site] = proposed;
            stats.accepted += 1;
        }
    }
    stats
}
