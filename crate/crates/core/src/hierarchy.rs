//! Dyadic mesh hierarchy: hat/tilde splits and the multi-level chain state.
//!
//! Level `l` carries path values on the thinned mesh `S_l = {0, 2^l, 2*2^l,
//! ..., N}`. Splitting a level into alternating time slices gives the hat
//! block (even positions, which has exactly the shape of a level-`l+1` path)
//! and the tilde block (odd positions, the variables integrated out by the
//! next coarsening). Swap moves exchange a level's hat block with the whole
//! state of the level above.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::density::{Boundary, ProblemKind, ProblemSpec};
use crate::error::{Error, Result};

/// One chain's state: path values on the level mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelPath {
    /// Coarsening level `l`; spacing is `2^l * delta`.
    pub level: usize,
    /// Values at mesh indices `S_l`, length `N / 2^l + 1`.
    pub values: Vec<f64>,
    /// Mesh spacing `2^l * delta`.
    pub spacing: f64,
}

impl LevelPath {
    /// Build a path and check it against the spec (length, and pinned
    /// endpoints for bridge problems).
    pub fn new(level: usize, values: Vec<f64>, spec: &ProblemSpec) -> Result<Self> {
        let path = Self {
            level,
            values,
            spacing: spec.spacing(level),
        };
        path.check_invariants(spec)?;
        Ok(path)
    }

    /// Number of tilde (odd-position) sites.
    pub fn tilde_len(&self) -> usize {
        (self.values.len() - 1) / 2
    }

    /// The invariant-checker oracle: length agrees with the level mesh and
    /// bridge endpoints carry the boundary values.
    pub fn check_invariants(&self, spec: &ProblemSpec) -> Result<()> {
        let expected = spec.mesh_len(self.level)?;
        if self.values.len() != expected {
            return Err(Error::MeshMismatch {
                level: self.level,
                n_fine: spec.n_fine,
                expected,
                got: self.values.len(),
            });
        }
        if let Boundary::Bridge { z_minus, z_plus } = spec.boundary {
            let left = self.values[0];
            let right = *self.values.last().unwrap();
            if left != z_minus || right != z_plus {
                return Err(Error::BoundaryMismatch {
                    got_left: left,
                    got_right: right,
                    z_minus,
                    z_plus,
                });
            }
        }
        Ok(())
    }
}

/// Split a level path into alternating time slices: `hat` takes the even
/// positions (global indices `0, 2*2^l, ...,  N`) and `tilde` the odd ones.
/// The hat block has the shape of a level-`l+1` path.
pub fn split_level(path: &LevelPath) -> (Vec<f64>, Vec<f64>) {
    let mut hat = Vec::with_capacity(path.values.len() / 2 + 1);
    let mut tilde = Vec::with_capacity(path.values.len() / 2);
    for (i, &v) in path.values.iter().enumerate() {
        if i % 2 == 0 {
            hat.push(v);
        } else {
            tilde.push(v);
        }
    }
    (hat, tilde)
}

/// Interleave a hat and a tilde block back into a level-`level` path.
/// Requires `hat.len() == tilde.len() + 1`.
pub fn merge_level(hat: &[f64], tilde: &[f64], level: usize, spec: &ProblemSpec) -> Result<LevelPath> {
    if hat.len() != tilde.len() + 1 {
        return Err(Error::LengthMismatch {
            hat: hat.len(),
            tilde: tilde.len(),
        });
    }
    let mut values = Vec::with_capacity(hat.len() + tilde.len());
    for i in 0..tilde.len() {
        values.push(hat[i]);
        values.push(tilde[i]);
    }
    values.push(hat[tilde.len()]);
    LevelPath::new(level, values, spec)
}

/// Interleave without validating against a spec; used inside kernels where
/// the pieces are known to come from valid paths.
pub(crate) fn merge_values(hat: &[f64], tilde: &[f64]) -> Vec<f64> {
    debug_assert_eq!(hat.len(), tilde.len() + 1);
    let mut values = Vec::with_capacity(hat.len() + tilde.len());
    for i in 0..tilde.len() {
        values.push(hat[i]);
        values.push(tilde[i]);
    }
    values.push(hat[tilde.len()]);
    values
}

/// The product-chain state: one path per level, finest first.
#[derive(Clone, Debug)]
pub struct HierarchyState {
    pub levels: Vec<LevelPath>,
    pub spec: ProblemSpec,
    /// Coarsest level index `L`; there are `L + 1` chains.
    pub coarsest: usize,
}

impl HierarchyState {
    /// The invariant-checker oracle for the whole hierarchy: per-level path
    /// invariants, 2:1 mesh ratios, and at least one interior point at the
    /// coarsest level.
    pub fn check_invariants(&self) -> Result<()> {
        if self.levels.len() != self.coarsest + 1 {
            return Err(Error::InvalidProblem(format!(
                "{} levels stored but coarsest index is {}",
                self.levels.len(),
                self.coarsest
            )));
        }
        check_level_count(&self.spec, self.coarsest)?;
        for (l, path) in self.levels.iter().enumerate() {
            if path.level != l {
                return Err(Error::InvalidProblem(format!(
                    "level {l} slot holds a level-{} path",
                    path.level
                )));
            }
            path.check_invariants(&self.spec)?;
        }
        for l in 0..self.coarsest {
            if self.levels[l].values.len() != 2 * self.levels[l + 1].values.len() - 1 {
                return Err(Error::InvalidProblem(format!(
                    "levels {l} and {} are not in 2:1 mesh ratio",
                    l + 1
                )));
            }
        }
        Ok(())
    }

    /// Midpoint value of the finest path (the `t = T/2` sample).
    pub fn midpoint(&self) -> f64 {
        let v = &self.levels[0].values;
        v[(v.len() - 1) / 2]
    }
}

fn check_level_count(spec: &ProblemSpec, coarsest: usize) -> Result<()> {
    let step = 1usize.checked_shl(coarsest as u32).unwrap_or(0);
    if step == 0 || spec.n_fine % step != 0 || spec.n_fine / step < 2 {
        return Err(Error::Divisibility {
            n_fine: spec.n_fine,
            levels: coarsest,
        });
    }
    if let Some(obs) = spec.observations() {
        obs.check_on_mesh(coarsest)?;
    }
    Ok(())
}

/// Initialize every level independently: a deterministic interpolation
/// skeleton plus `N(0, 2^{l-1} delta)` perturbations at the free sites.
///
/// Bridges interpolate linearly between the pinned endpoints and perturb
/// interior sites only; smoothing problems interpolate the observed values
/// piecewise-linearly and perturb every site. The paper does not specify an
/// initialization; this one starts swaps from plausible states and leaves
/// the rest to burn-in.
pub fn init_hierarchy<R: Rng + ?Sized>(spec: &ProblemSpec, coarsest: usize, rng: &mut R) -> Result<HierarchyState> {
    init_hierarchy_with_noise(spec, coarsest, 1.0, rng)
}

/// [`init_hierarchy`] with the perturbation standard deviation scaled by
/// `noise_scale` (zero gives the bare interpolation skeleton).
pub fn init_hierarchy_with_noise<R: Rng + ?Sized>(
    spec: &ProblemSpec,
    coarsest: usize,
    noise_scale: f64,
    rng: &mut R,
) -> Result<HierarchyState> {
    check_level_count(spec, coarsest)?;
    let mut levels = Vec::with_capacity(coarsest + 1);
    for level in 0..=coarsest {
        let len = spec.mesh_len(level)?;
        let stride = 1usize << level;
        let sd = noise_scale * (0.5 * spec.spacing(level)).sqrt();
        let mut values: Vec<f64> = (0..len).map(|i| skeleton(spec, i * stride)).collect();
        match spec.kind() {
            ProblemKind::Bridge => {
                for v in values.iter_mut().take(len - 1).skip(1) {
                    *v += sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
            ProblemKind::Smoothing => {
                for v in values.iter_mut() {
                    *v += sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        levels.push(LevelPath::new(level, values, spec)?);
    }
    let state = HierarchyState {
        levels,
        spec: spec.clone(),
        coarsest,
    };
    state.check_invariants()?;
    Ok(state)
}

/// Interpolation skeleton at fine-mesh index `t`.
fn skeleton(spec: &ProblemSpec, t: usize) -> f64 {
    match &spec.boundary {
        Boundary::Bridge { z_minus, z_plus } => {
            let frac = t as f64 / spec.n_fine as f64;
            z_minus + (z_plus - z_minus) * frac
        }
        Boundary::Smoothing(obs) => {
            // Piecewise-linear through the observed values.
            match obs.times.binary_search(&t) {
                Ok(j) => obs.values[j],
                Err(j) => {
                    let (t0, t1) = (obs.times[j - 1], obs.times[j]);
                    let (h0, h1) = (obs.values[j - 1], obs.values[j]);
                    let frac = (t - t0) as f64 / (t1 - t0) as f64;
                    h0 + (h1 - h0) * frac
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{DriftModel, ObservationModel};
    use crate::rng::{Role, Streams};

    fn bridge_spec(n: usize) -> ProblemSpec {
        ProblemSpec::bridge(DriftModel::ZeroDrift, 1.0, n, 0.0, 0.0).unwrap()
    }

    #[test]
    fn split_unrolls_on_five_points() {
        let spec = bridge_spec(4);
        let path = LevelPath {
            level: 0,
            values: vec![0.0, 1.0, 2.0, 3.0, 0.0],
            spacing: spec.delta,
        };
        let (hat, tilde) = split_level(&path);
        assert_eq!(hat, vec![0.0, 2.0, 0.0]);
        assert_eq!(tilde, vec![1.0, 3.0]);
    }

    #[test]
    fn merge_interleaves_and_round_trips() {
        let spec = bridge_spec(4);
        let merged = merge_level(&[0.0, 2.0, 0.0], &[1.0, 3.0], 0, &spec).unwrap();
        assert_eq!(merged.values, vec![0.0, 1.0, 2.0, 3.0, 0.0]);
        let (h, t) = split_level(&merged);
        assert_eq!(h, vec![0.0, 2.0, 0.0]);
        assert_eq!(t, vec![1.0, 3.0]);
    }

    #[test]
    fn merge_rejects_equal_lengths() {
        let spec = bridge_spec(4);
        assert!(matches!(
            merge_level(&[0.0, 1.0], &[0.5, 0.5], 0, &spec),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn hat_of_level_l_is_a_valid_level_lp1_path() {
        let spec = bridge_spec(16);
        let mut rng = Streams::new(3).stream(0, 0, Role::Scratch);
        for _ in 0..200 {
            let state = init_hierarchy(&spec, 3, &mut rng).unwrap();
            for l in 0..3 {
                let (hat, _) = split_level(&state.levels[l]);
                LevelPath::new(l + 1, hat, &spec).unwrap();
            }
        }
    }

    #[test]
    fn init_zero_noise_bridge_is_all_zeros() {
        let spec = bridge_spec(8);
        let mut rng = Streams::new(1).stream(0, 0, Role::Init);
        let state = init_hierarchy_with_noise(&spec, 2, 0.0, &mut rng).unwrap();
        for path in &state.levels {
            assert!(path.values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn init_rejects_non_dividing_level_count() {
        let spec = bridge_spec(8);
        let mut rng = Streams::new(1).stream(0, 0, Role::Init);
        // 2^3 divides 8 but leaves a single interval; 2^4 does not divide.
        assert!(matches!(
            init_hierarchy(&spec, 3, &mut rng),
            Err(Error::Divisibility { .. })
        ));
        assert!(matches!(
            init_hierarchy(&spec, 4, &mut rng),
            Err(Error::Divisibility { .. })
        ));
    }

    #[test]
    fn init_satisfies_hierarchy_invariants() {
        let spec = bridge_spec(32);
        let mut rng = Streams::new(2).stream(0, 0, Role::Init);
        for _ in 0..50 {
            let state = init_hierarchy(&spec, 4, &mut rng).unwrap();
            state.check_invariants().unwrap();
        }
    }

    #[test]
    fn init_smoothing_interpolates_observations() {
        let obs = ObservationModel::gaussian_identity(vec![0, 4, 8], vec![-1.0, 1.0, 0.0], 8, 0.01).unwrap();
        let spec = ProblemSpec::smoothing(DriftModel::ZeroDrift, 1.0, 8, obs).unwrap();
        let mut rng = Streams::new(1).stream(0, 0, Role::Init);
        let state = init_hierarchy_with_noise(&spec, 2, 0.0, &mut rng).unwrap();
        let fine = &state.levels[0].values;
        assert_eq!(fine[0], -1.0);
        assert_eq!(fine[2], 0.0); // halfway up the first segment
        assert_eq!(fine[4], 1.0);
        assert_eq!(fine[8], 0.0);
        // Observation off the coarsest mesh is rejected.
        let obs2 = ObservationModel::gaussian_identity(vec![0, 2, 8], vec![0.0; 3], 8, 0.01).unwrap();
        let spec2 = ProblemSpec::smoothing(DriftModel::ZeroDrift, 1.0, 8, obs2).unwrap();
        assert!(matches!(
            init_hierarchy(&spec2, 2, &mut rng),
            Err(Error::ObservationOffMesh { .. })
        ));
    }

    #[test]
    fn swap_compatibility_of_adjacent_levels() {
        let spec = bridge_spec(64);
        let mut rng = Streams::new(7).stream(0, 0, Role::Init);
        let state = init_hierarchy(&spec, 4, &mut rng).unwrap();
        for l in 0..state.coarsest {
            let (hat, _) = split_level(&state.levels[l]);
            assert_eq!(hat.len(), state.levels[l + 1].values.len());
        }
    }

    #[test]
    fn global_index_bookkeeping_round_trip() {
        // The value at position m of level l sits at global index m * 2^l,
        // i.e. mesh time m * 2^l * delta.
        let spec = bridge_spec(16);
        let mut rng = Streams::new(8).stream(0, 0, Role::Init);
        let state = init_hierarchy(&spec, 2, &mut rng).unwrap();
        for l in 0..=2usize {
            let stride = 1usize << l;
            for (m, &v) in state.levels[l].values.iter().enumerate() {
                let global = m * stride;
                assert!(global <= spec.n_fine);
                let time = global as f64 * spec.delta;
                assert!((time - m as f64 * state.levels[l].spacing).abs() < 1e-15);
                // A level-0 view of the same global index, when the levels
                // share the skeleton (zero noise), would agree; here we only
                // check the index map is internally consistent.
                let _ = v;
            }
        }
    }
}
