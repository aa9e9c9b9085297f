//! Conditional McKean-Vlasov MDPs on finite spaces.
//!
//! The crate computes the optimal value of a mean-field control problem with
//! common noise through the Bellman fixed point of the lifted MDP on the
//! probability simplex, extracts randomized feedback policies, and checks
//! them against finite-population Monte Carlo simulation.

pub mod artifact;
pub mod error;
pub mod evaluate;
pub mod exec;
pub mod grid;
pub mod lifted;
pub mod model;
pub mod sim;
pub mod solver;
pub mod spaces;
pub mod transport;

pub use error::{Error, Result};
pub use exec::Execution;
