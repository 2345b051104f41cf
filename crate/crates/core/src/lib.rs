//! Cognitive jamming power control for proactive eavesdropping.
//!
//! A full-duplex legitimate monitor overhears a suspicious point-to-point
//! link and may jam the suspicious receiver to push its rate down to what
//! the monitor can decode. This crate computes jamming power allocations
//! over a finite ensemble of fading states:
//!
//! - [`solver_outage`]: maximize the eavesdropping non-outage probability,
//!   with or without residual self-interference.
//! - [`solver_fixed`]: maximize the relative eavesdropping rate when the
//!   suspicious transmitter uses constant power.
//! - [`solver_wf`]: the same objective when the transmitter water-fills
//!   against the jamming it observes.
//! - [`online`]: a probe-and-threshold scheme that needs only local
//!   observations at the monitor.
//!
//! [`channel`] generates the fading ensembles, [`metrics`] evaluates
//! policies and provides the baselines, and [`numopt`] holds the shared
//! bisection, ellipsoid and brute-force kernels. [`cli`] drives the
//! experiment sweeps.

pub mod channel;
pub mod cli;
pub mod metrics;
pub mod numopt;
pub mod online;
pub mod solver_fixed;
pub mod solver_outage;
pub mod solver_wf;
pub mod units;

pub use channel::{FadingState, GeometryConfig, LoopbackModel, RayleighConfig, StateEnsemble};
pub use metrics::{EvalReport, JammingPolicy, NoiseModel, TxMode, TxPowerProfile};

/// Errors raised by the solvers, samplers and experiment driver.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid user-facing configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// A caller violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    /// The bisection bracket does not straddle a sign change.
    #[error("bisection bracket [{lo}, {hi}] does not contain a sign change")]
    Bracket { lo: f64, hi: f64 },
    /// An iterative method hit its iteration cap.
    #[error("no convergence after {iterations} iterations: {what}")]
    Convergence { what: String, iterations: usize },
    /// Numerical breakdown (loss of positive definiteness, NaN).
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Enumeration would exceed its combination cap.
    #[error("search space of {combinations} combinations exceeds cap {cap}")]
    Size { combinations: f64, cap: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
