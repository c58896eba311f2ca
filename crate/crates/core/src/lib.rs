//! Dynamic electricity pricing with ancillary costs.
//!
//! A population of consumers with Markov exogenous states chooses demand
//! over a finite horizon. The supplier's cost has a primary part that
//! depends on current aggregate demand and an ancillary part that depends
//! on consecutive demands. The crate computes equilibria of the continuum
//! game under a three-part price (marginal cost of current demand, plus a
//! backward charge on the previous action) and under plain marginal cost
//! pricing, checks them, and runs finite-population experiments.

pub mod ancillary;
pub mod cli;
pub mod equilibrium;
pub mod error;
pub mod finite_game;
pub mod num;
pub mod pricing;
pub mod program;
pub mod scenario;
pub mod twostage;

pub use error::{Error, Result};
