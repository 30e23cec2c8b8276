//! Optimal Skorokhod embedding on finite-state Markov chains with
//! submartingale costs.
//!
//! Given a sub-stochastic kernel `P` on a finite state space (with an
//! implicit cemetery state absorbing the row deficit), a source law `mu`
//! and a target law `nu`, the library decides embeddability, computes
//! primal optimal randomized stopping rules and dual optimal potentials
//! with a certified zero duality gap, extracts barrier hitting times
//! under a twist condition, and verifies the structural identities of the
//! underlying duality theory numerically.
//!
//! The two production solvers are:
//! - an occupation-measure LP (dense simplex, Farkas certificates), and
//! - a projected supergradient ascent over the normalized dual box,
//!
//! which cross-check each other.  Monte Carlo simulation provides an
//! independent empirical check of the exact pushforward computations.

pub mod chain;
pub mod cli;
pub mod costs;
pub mod dual;
pub mod error;
pub mod fixtures;
pub mod linalg;
pub mod lp;
pub mod potential;
pub mod problem;
pub mod report;
pub mod sim;
pub mod simplex;
pub mod snell;
pub mod verify;

pub use chain::{Chain, Measure, Mode};
pub use costs::{AugmentedChain, AuxSpec, CostModel, TwistReport};
pub use error::Error;
pub use lp::OccupationSolution;
pub use potential::Potential;
pub use snell::ValueFunction;
pub use verify::{ContactSet, StoppingRule};
