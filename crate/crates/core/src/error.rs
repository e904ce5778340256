//! Error type shared across the sampler.

use thiserror::Error;

/// Errors raised by density evaluation, hierarchy bookkeeping, kernels and
/// diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    /// `|1 - dt * f'(x)|` fell below the stability threshold; the implicit
    /// update would take a huge silent step. Signals an unstable `dt`/model
    /// pair.
    #[error("degenerate implicit-Euler denominator {denom:e} at x = {x}, dt = {dt}")]
    DegenerateDenominator { x: f64, dt: f64, denom: f64 },

    /// Path length disagrees with `N / 2^level + 1`.
    #[error("level {level} path has {got} values, mesh with N = {n_fine} needs {expected}")]
    MeshMismatch {
        level: usize,
        n_fine: usize,
        expected: usize,
        got: usize,
    },

    /// Bridge path endpoints must equal the pinned boundary values.
    #[error("bridge endpoints ({got_left}, {got_right}) differ from boundary ({z_minus}, {z_plus})")]
    BoundaryMismatch {
        got_left: f64,
        got_right: f64,
        z_minus: f64,
        z_plus: f64,
    },

    /// Interleave requires `hat.len() == tilde.len() + 1`.
    #[error("cannot merge hat of length {hat} with tilde of length {tilde}")]
    LengthMismatch { hat: usize, tilde: usize },

    /// The requested number of levels does not divide the fine mesh.
    #[error("2^{levels} does not divide N = {n_fine} (or leaves fewer than 2 coarse intervals)")]
    Divisibility { n_fine: usize, levels: usize },

    /// Observation indices must lie on the coarsest mesh.
    #[error("observation index {index} is not divisible by 2^{levels}")]
    ObservationOffMesh { index: usize, levels: usize },

    /// Invalid observation sequence (ordering or endpoint constraints).
    #[error("invalid observations: {0}")]
    InvalidObservations(String),

    /// Invalid problem parameters.
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    /// The drift derivative disagrees with a finite-difference check.
    #[error("f_prime({x}) = {stated} disagrees with finite difference {estimated}")]
    DerivativeMismatch { x: f64, stated: f64, estimated: f64 },

    /// Every importance weight underflowed to zero: the reference density
    /// fails to cover the target at this pair.
    #[error("all importance weights vanished in swap at pair {level}/{}", level + 1)]
    AllZeroWeights { level: usize },

    /// No marginal oracle applies to this model/level combination.
    #[error("marginal oracle unavailable: {0}")]
    OracleUnavailable(String),

    /// Trace too short for the requested autocorrelation window.
    #[error("trace of length {len} cannot support max lag {max_lag} (need len > 4*max_lag)")]
    InsufficientLength { len: usize, max_lag: usize },

    /// The trace is (numerically) constant, so correlations are undefined.
    #[error("trace has vanishing variance")]
    InsufficientVariance,
}

pub type Result<T> = std::result::Result<T, Error>;
