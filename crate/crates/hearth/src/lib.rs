//! Household instruction-following pipeline.
//!
//! A deterministic text-world simulator ([`env`]), sparse-reward offline
//! datasets ([`dataset`]), a panel of reward-estimating personas
//! ([`estimator`]), consistency-based reward channels ([`consistency`]), a
//! learned reward-ensemble orchestrator ([`orchestrator`]), a conservative
//! offline Q-learner ([`offline_rl`]), evaluation metrics ([`eval`]), and the
//! staged pipeline driver ([`pipeline`]).

pub mod consistency;
pub mod features;
pub mod nn;
pub mod offline_rl;
pub mod orchestrator;
pub mod dataset;
pub mod env;
pub mod error;
pub mod estimator;
pub mod seeding;

pub use error::{Error, Result};
