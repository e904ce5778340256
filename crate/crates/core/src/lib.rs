//! Parallel marginalization Monte Carlo for conditional path sampling.
//!
//! A hierarchy of Markov chains is run in parallel: level 0 samples the path
//! density of a discretized SDE on the fine mesh, and each coarser level
//! samples an approximate marginal of the level below it, obtained by
//! evaluating the same discretization on a dyadically thinned mesh. The
//! chains exchange state through swap moves whose acceptance probability is
//! built from importance-sampled marginal-ratio estimates, so that the
//! product of all level densities is preserved exactly.
//!
//! The crate is organised around the sampler's moving parts:
//!
//! * [`density`] — the SDE model, the one-step implicit-Euler potential, and
//!   the unnormalized log path densities at every coarsening level.
//! * [`hierarchy`] — dyadic index bookkeeping: hat/tilde splits, merges, and
//!   the full multi-level state.
//! * [`kernels`] — per-level Metropolis sweeps, the swap acceptance rules,
//!   and the mixture transition rule that composes them.
//! * [`diagnostics`] — swap-rate tables, autocorrelation, integrated
//!   autocorrelation time, and cost-normalized comparisons.
//! * [`rng`] — deterministic per-(step, level, role) random substreams, so
//!   runs replay bitwise regardless of thread count.
//!
//! All densities are handled in log space and are unnormalized: level
//! normalization constants are never computed, and every consumer is
//! ratio-based.

pub mod density;
pub mod diagnostics;
pub mod error;
pub mod hierarchy;
pub mod kernels;
pub mod rng;

pub use density::{lie_step, log_level_density, v_potential};
pub use density::{Boundary, DriftModel, ObservationModel, ProblemKind, ProblemSpec};
pub use error::{Error, Result};
pub use hierarchy::{init_hierarchy, merge_level, split_level, HierarchyState, LevelPath};
pub use kernels::{
    exact_swap_accept, mh_sweep, pm_step, swap_bridge_simplified, swap_pm1, swap_pm2, MSchedule,
    PmConfig, ReferenceConditional, SequentialKernelFamily, StepRecord, SwapOutcome, SwapVariant,
};
pub use rng::{Role, Streams};
