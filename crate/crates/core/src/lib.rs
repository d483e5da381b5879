//! Fair allocation of indivisible chores to agents with additive disutilities.
//!
//! The crate provides:
//!
//! - [`instance`]: disutility distributions and reproducible instance sampling;
//! - [`fairness`]: allocations and the fairness predicates (envy-freeness,
//!   proportionality, EFX, maximin share);
//! - [`matching`]: the bipartite matching engine used by the allocators;
//! - [`allocators`]: the allocation algorithms and regime dispatchers;
//! - [`oracle`]: exact brute-force existence checkers for small instances;
//! - [`theory`]: analytic quantities and non-existence certificates;
//! - [`experiments`]: a deterministic Monte Carlo harness over (n, m) grids.
//!
//! All randomness is counter-based: every sampled quantity is a pure function
//! of a 64-bit seed and integer coordinates, so results are reproducible
//! bit-for-bit regardless of iteration order or worker count.

pub mod allocators;
mod error;
pub mod experiments;
pub mod fairness;
pub mod instance;
pub mod matching;
pub mod oracle;
pub mod seeding;
pub mod theory;

pub use error::{Error, Result};
