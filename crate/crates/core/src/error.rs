//! Error type shared by every module of the crate.
//!
//! All fallible operations return [`Result`]. Numerical failures (eigensolver
//! breakdown, singular resolvent pivots, non-integer plaquette sums) surface as
//! explicit variants — never as silent NaNs in the output.

use thiserror::Error;

/// Everything that can go wrong while building models or extracting results.
#[derive(Debug, Error)]
pub enum Error {
    /// A physical parameter violates its domain (negative coupling, zero wavelength, ...).
    #[error("invalid parameter `{name}`: {message}")]
    InvalidParam { name: &'static str, message: String },

    /// A chain or map was assembled with inconsistent pieces.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A frequency grid is malformed or does not cover the requested physics.
    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),

    /// The two bands touch (within tolerance) at the reported position.
    #[error("bands degenerate at x = {x:.6e} m (gap {gap:.3e} MHz below tolerance)")]
    Degenerate { x: f64, gap: f64 },

    /// The dense eigensolver failed to converge or produced non-finite output.
    #[error("eigensolver failure: {0}")]
    EigenFailed(String),

    /// A resolvent evaluation hit an exactly singular pivot.
    #[error("resolvent breakdown at frequency {freq_mhz} MHz")]
    ResolventBreakdown { freq_mhz: f64 },

    /// Ladder-based operations need a moving atom; v_x = 0 has no ladder.
    #[error("Wannier-Stark ladders are undefined at zero velocity")]
    LaddersUndefined,

    /// Peak extraction found fewer than two peaks.
    #[error("no ladder resolved: {0}")]
    NoLadderResolved(String),

    /// The velocity quadrature cannot resolve the pump hole.
    #[error("hole under-resolved: {0}")]
    HoleUnderResolved(String),

    /// Trajectory slopes disagree by more than the consistency threshold.
    #[error("inconsistent ladder trajectories: circular spread {spread_rad:.3} rad exceeds 0.5 rad")]
    InconsistentTrajectories { spread_rad: f64 },

    /// Not enough usable trajectories for a slope fit.
    #[error("insufficient trajectories: {0}")]
    InsufficientTrajectories(String),

    /// The plaquette sum failed to round cleanly to an integer.
    #[error("plaquette sum {value:.3e} is not an integer multiple of 2π; refine the grid")]
    NonIntegerChern { value: f64 },

    /// Peak tracking across maps found two equally plausible continuations.
    #[error("ladder tracking ambiguous at step {step}: candidates separated by {margin_mhz:.3} MHz (below the ambiguity margin); use finer eta sampling")]
    TrackingAmbiguity { step: usize, margin_mhz: f64 },

    /// Adjacent phase samples differ by more than the unwrapping step limit.
    #[error("phase step {step_rad:.3} rad between eta samples exceeds the π/2 unwrapping limit; use finer eta sampling")]
    PhaseStepTooLarge { step_rad: f64 },

    /// A collection of maps that must share axes does not.
    #[error("map mismatch: {0}")]
    MapMismatch(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
