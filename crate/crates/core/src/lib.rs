//! Operator-learning surrogate for the transient response of a two-metal
//! composite bar under arbitrary strain loading.
//!
//! The pieces, bottom-up:
//!
//! * [`signal`] synthesizes strain loads (Gaussian-process draws, sinusoids,
//!   piecewise linear ramps) and resamples them between time grids.
//! * [`oracle`] is the physics ground truth: a quasi-static elastoplastic
//!   bar of series segments with parallel cubes.
//! * [`dno`] holds the branch/trunk operator network, its hand-written
//!   reverse-mode gradients, Adam, and the sequence and point-wise training loops.
//! * [`incremental`] trains one model per material point, each warm-started
//!   from the previous point along a route.
//! * [`eval`] provides the accuracy metric, noise injection, and the study
//!   harnesses (dataset size, architecture, noise, time extension, training mode).

pub mod dno;
pub mod error;
pub mod eval;
pub mod incremental;
pub mod oracle;
pub mod rng;
pub mod signal;

pub use error::{Error, Result};
pub use signal::{LoadSignal, TimeGrid};
