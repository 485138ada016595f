//! Offline primal-dual reinforcement learning for linear MDPs.
//!
//! * [`linmdp`] — the environment model and exact oracles.
//! * [`sampling`] — behavior occupancy, covariance and offline datasets.
//! * [`pd_discounted`] / [`pd_average`] — the saddle-point solvers and their
//!   duality-gap diagnostics.
//! * [`coverage`] — coverage ratios between a target and the behavior data.
//! * [`harness`] / [`cli`] — experiment configs, sweeps and the command line.

pub mod cli;
pub mod coverage;
pub mod error;
pub mod harness;
pub mod linmdp;
pub mod numerics;
pub mod par;
pub mod pd_average;
pub mod pd_discounted;
pub mod rng;
pub mod sampling;
pub mod solver;

pub use error::{Error, Result};
pub use linmdp::{LinearMDP, Policy, Setting};
