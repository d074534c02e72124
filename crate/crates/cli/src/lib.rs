//! Command-line front end: configuration parsing, run orchestration, and the
//! CSV/SVG writers shared by the subcommands.
//!
//! Every failure is mapped to a named category and a documented exit code, so
//! scripted callers can branch on what went wrong without scraping messages.

use std::path::PathBuf;

pub mod config;
pub mod csv;
pub mod run;
pub mod svg;

/// Anything a run can fail with, folded into three sources: the config
/// document, the physics/numerics core, and the filesystem.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Config syntax or schema violation.
    #[error("config error: {0}")]
    Config(String),
    /// An error propagated from the computation core.
    #[error("{0}")]
    Core(#[from] slvst_core::Error),
    /// Filesystem failure, with the path it happened on.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// Stable category name, printed as `error[<category>]: ...`.
    pub fn category(&self) -> &'static str {
        use slvst_core::Error as E;
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Core(e) => match e {
                E::InvalidParam { .. } => "invalid-param",
                E::InvalidModel(_) => "invalid-model",
                E::InvalidGrid(_) => "invalid-grid",
                E::Degenerate { .. } => "degenerate-bands",
                E::EigenFailed(_) => "eigen-failed",
                E::ResolventBreakdown { .. } => "resolvent-breakdown",
                E::LaddersUndefined => "ladders-undefined",
                E::NoLadderResolved(_) => "no-ladder-resolved",
                E::HoleUnderResolved(_) => "hole-under-resolved",
                E::InconsistentTrajectories { .. } => "inconsistent-trajectories",
                E::InsufficientTrajectories(_) => "insufficient-trajectories",
                E::NonIntegerChern { .. } => "non-integer-invariant",
                E::TrackingAmbiguity { .. } => "tracking-ambiguity",
                E::PhaseStepTooLarge { .. } => "phase-step-too-large",
                E::MapMismatch(_) => "map-mismatch",
            },
        }
    }

    /// Exit code group: 2 config, 3 parameter/model domain, 4 numerical
    /// failure, 5 unresolved physics, 6 i/o.
    pub fn exit_code(&self) -> u8 {
        use slvst_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 6,
            CliError::Core(e) => match e {
                E::InvalidParam { .. }
                | E::InvalidModel(_)
                | E::InvalidGrid(_)
                | E::Degenerate { .. } => 3,
                E::EigenFailed(_)
                | E::ResolventBreakdown { .. }
                | E::NonIntegerChern { .. }
                | E::PhaseStepTooLarge { .. } => 4,
                E::LaddersUndefined
                | E::NoLadderResolved(_)
                | E::HoleUnderResolved(_)
                | E::InconsistentTrajectories { .. }
                | E::InsufficientTrajectories(_)
                | E::TrackingAmbiguity { .. }
                | E::MapMismatch(_) => 5,
            },
        }
    }
}

/// Wrap an i/o error with the path it occurred on.
pub fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}

// ===========================================================================
