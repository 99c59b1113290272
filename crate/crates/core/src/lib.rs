//! Constrained contextual bandits driven by online regression oracles.
//!
//! Each round the controller asks its regression oracles for per-arm reward
//! and cost estimates, folds the cost estimates into a surrogate reward
//! weighted by the derivative of a Lyapunov potential evaluated at the
//! virtual queue, and samples an arm from the Inverse Gap Weighting
//! distribution over the negated surrogate. The queue tracks cumulative
//! constraint violation through a Lindley recursion.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the experiment
//! runner and the command line live in the `ccb-harness` crate.
//!
//! Modules:
//! - [`igw`]: Inverse Gap Weighting solve/sample and the regret inequality checker.
//! - [`oracle`]: exponential-weights and linear online regression oracles with error ledgers.
//! - [`lyapunov`]: quadratic and exponential potentials, virtual queues, auto-tuning.
//! - [`controller`]: the round loop, hard-stopping wrapper and unknown-error ensemble.
//! - [`envs`]: problem instances, realization laws, lower-bound and Slater generators.
//! - [`benchmark`]: offline benchmark policies, the long-term budget LP and its dual.
//! - [`metrics`]: regret/CCV series, the drift-plus-regret diagnostic and log-log rate fits.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod benchmark;
pub mod controller;
pub mod envs;
mod error;
pub mod igw;
pub mod lyapunov;
pub mod metrics;
pub mod oracle;
mod table;

pub use error::{Error, Result};
pub use table::Table;

/// Deterministic RNG used across the crate. Seeded per run, with separate
/// streams for contexts, actions and outcome noise.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Index of a context in a finite context set.
pub type ContextId = usize;

/// RNG stream ids used by [`rng_for`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngStream {
    Contexts = 1,
    Actions = 2,
    Outcomes = 3,
    Master = 4,
}

/// Build the RNG for one stream of one run.
pub fn rng_for(seed: u64, stream: RngStream) -> SimRng {
    use rand::SeedableRng;
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
