//! Reference conditionals: tractable densities over a level's tilde block.
//!
//! A swap at pair `(l, l+1)` integrates the level-`l` tilde variables out by
//! importance sampling. The reference both draws candidate tilde blocks and
//! weights them, so it must be normalized and it must cover the exact
//! conditional `pi_l(tilde | hat)`.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::density::ProblemSpec;

/// Abstraction over tilde-block proposal densities. `hat` always has
/// `tilde.len() + 1` entries; tilde site `k` sits between `hat[k]` and
/// `hat[k + 1]`.
pub trait Reference: Send + Sync {
    fn sample(&self, hat: &[f64], rng: &mut dyn RngCore) -> Vec<f64>;
    /// Normalized log density of a tilde block given the hat block.
    fn log_density(&self, tilde: &[f64], hat: &[f64]) -> f64;
}

/// The production reference for a swap at pair `(l, l+1)`.
#[derive(Clone, Debug)]
pub struct ReferenceConditional {
    pub level: usize,
    pub kind: ReferenceKind,
}

#[derive(Clone, Debug)]
pub enum ReferenceKind {
    /// Independent Gaussians at each tilde site, centered on the midpoint of
    /// the neighbouring hat values, with variance `2^{l-1} delta`. For zero
    /// drift this is the exact conditional.
    MidpointGaussian { variance: f64 },
}

impl ReferenceConditional {
    /// Midpoint Gaussian with the level's natural variance `2^{l-1} delta`
    /// (half the level spacing).
    pub fn midpoint_gaussian(spec: &ProblemSpec, level: usize) -> Self {
        Self {
            level,
            kind: ReferenceKind::MidpointGaussian {
                variance: 0.5 * spec.spacing(level),
            },
        }
    }

    /// Midpoint Gaussian with the variance multiplied by `scale`. A scale
    /// other than 1 deliberately mismatches the zero-drift conditional while
    /// still covering it; used to exercise weight noise in tests.
    pub fn with_variance_scale(spec: &ProblemSpec, level: usize, scale: f64) -> Self {
        assert!(scale > 0.0);
        Self {
            level,
            kind: ReferenceKind::MidpointGaussian {
                variance: scale * 0.5 * spec.spacing(level),
            },
        }
    }

    pub fn variance(&self) -> f64 {
        match self.kind {
            ReferenceKind::MidpointGaussian { variance } => variance,
        }
    }
}

impl Reference for ReferenceConditional {
    fn sample(&self, hat: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let sd = self.variance().sqrt();
        (0..hat.len() - 1)
            .map(|k| {
                let mean = 0.5 * (hat[k] + hat[k + 1]);
                let xi: f64 = StandardNormal.sample(rng);
                mean + sd * xi
            })
            .collect()
    }

    fn log_density(&self, tilde: &[f64], hat: &[f64]) -> f64 {
        debug_assert_eq!(hat.len(), tilde.len() + 1);
        let variance = self.variance();
        let norm = 0.5 * (2.0 * std::f64::consts::PI * variance).ln();
        let mut logp = 0.0;
        for (k, &t) in tilde.iter().enumerate() {
            let d = t - 0.5 * (hat[k] + hat[k + 1]);
            logp -= d * d / (2.0 * variance) + norm;
        }
        logp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DriftModel;
    use crate::rng::{Role, Streams};
    use approx::assert_relative_eq;

    #[test]
    fn variance_is_half_the_level_spacing() {
        let spec = ProblemSpec::bridge(DriftModel::ZeroDrift, 10.0, 10240, 0.0, 0.0).unwrap();
        for level in 0..6 {
            let r = ReferenceConditional::midpoint_gaussian(&spec, level);
            assert_relative_eq!(r.variance(), 0.5 * spec.spacing(level));
        }
    }

    #[test]
    fn log_density_integrates_to_one_per_site() {
        // The density factorizes over sites; integrate one coordinate on a
        // fine grid and check the mass is 1.
        let spec = ProblemSpec::bridge(DriftModel::ZeroDrift, 1.0, 4, 0.0, 0.0).unwrap();
        let r = ReferenceConditional::midpoint_gaussian(&spec, 0);
        let hat = [0.0, 0.4, -0.2];
        let fixed = 0.1; // second tilde coordinate held fixed
        let fixed_term = {
            let d: f64 = fixed - 0.5 * (hat[1] + hat[2]);
            let v = r.variance();
            -d * d / (2.0 * v) - 0.5 * (2.0 * std::f64::consts::PI * v).ln()
        };
        let h = 1e-3;
        let mass: f64 = (-4000..=4000)
            .map(|i| {
                let t = i as f64 * h;
                (r.log_density(&[t, fixed], &hat) - fixed_term).exp() * h
            })
            .sum();
        assert_relative_eq!(mass, 1.0, max_relative = 1e-8);
    }

    #[test]
    fn samples_have_midpoint_mean_and_stated_variance() {
        let spec = ProblemSpec::bridge(DriftModel::ZeroDrift, 1.0, 4, 0.0, 0.0).unwrap();
        let r = ReferenceConditional::midpoint_gaussian(&spec, 0);
        let hat = [0.0, 1.0, 0.0];
        let mut rng = Streams::new(4).stream(0, 0, Role::Scratch);
        let n = 200_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let t = r.sample(&hat, &mut rng);
            s1 += t[0];
            s2 += t[0] * t[0];
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        let se = (r.variance() / n as f64).sqrt();
        assert!((mean - 0.5).abs() < 4.0 * se, "mean {mean}");
        assert_relative_eq!(var, r.variance(), max_relative = 0.02);
    }
}
