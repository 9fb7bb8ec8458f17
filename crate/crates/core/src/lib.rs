//! Analytics for embedded Markov chains whose transition rows are
//! reinforced along the trajectory.
//!
//! The crate covers four areas:
//!
//! - [`model`] — parsing, validating, and perturbing chain models
//!   (state names, per-state mean sojourn times, and a zero-diagonal
//!   row-stochastic transition matrix);
//! - [`limit`] — the limit of the reinforced chain, computed as the
//!   cycle reached by repeatedly following each row's unique maximum
//!   probability;
//! - [`sim`] — a seeded discrete-event simulation that reinforces the
//!   traversed cell of each row and detects the cycle the trajectory
//!   settles on;
//! - [`sojourn`] — mean sojourn times `s(G)`, `s(Gc)` and their sum
//!   (the sojourn time cycle) for a partition of the state space,
//!   computed from the stationary distribution, from a limit cycle,
//!   or by Monte Carlo.

pub mod dot;
pub mod limit;
pub mod model;
pub mod sim;
pub mod sojourn;

pub use limit::{all_limits, extract_cycle, greedy_walk, limit_of, same_limit, Cycle, GreedyPath};
pub use model::{parse_model, parse_raw, ChainModel, ModelError, StateId, ValidationReport};
pub use sim::{run, SimConfig, SimResult, SimState};
pub use sojourn::{
    cycle_sojourn, embedded_stationary, monte_carlo_sojourn, stationary_sojourn, Partition,
    SojournReport,
};
