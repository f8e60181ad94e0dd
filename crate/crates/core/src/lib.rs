//! Decentralized gradient-regularized Newton optimization over simulated
//! gossip networks.
//!
//! The crate is split along the lines of a typical experiment:
//!
//! * [`graph`]: random communication graphs, Metropolis-Hastings mixing
//!   matrices, the mixing rate and multi-round neighbor gossip.
//! * [`data`]: LibSVM parsing and random sample partitioning.
//! * [`objectives`]: the nine benchmark objective families with analytic
//!   derivatives.
//! * [`algo`]: the four-step decentralized regularized Newton iteration and
//!   its logarithmic mixing schedule.
//! * [`variants`]: Hessian-increment compression, lazy Hessian updates and
//!   adaptive scaling.
//! * [`baselines`]: EXTRA and DIGing.
//! * [`metrics`]: dispersion, stopping criteria, reference values and
//!   communication accounting.
//! * [`harness`]: configuration-driven Monte-Carlo campaigns and profiles.

pub mod algo;
pub mod baselines;
pub mod data;
mod error;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod objectives;
pub mod seed;
pub mod variants;

pub use error::{Error, Result};
