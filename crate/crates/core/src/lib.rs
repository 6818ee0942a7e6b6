//! Tabular PAC reinforcement learning: the Dyna-Delayed Q-learning (DDQ)
//! agent, its Delayed Q-learning and R-max degenerations, exact MDP
//! planning, grid-world environments, and runtime PAC diagnostics.
//!
//! Runs and batch evaluations parallelise over independent seeds with rayon
//! when the `parallel` feature is enabled (the default); without it every
//! entry point falls back to a sequential loop with identical results.

// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod diagnostics;
pub mod env;
pub mod error;
pub mod harness;
pub mod known;
pub mod mdp;
mod par;

pub use agent::{AgentConfig, AgentState, Algorithm, StepOutcome, Threshold};
pub use diagnostics::{AuditReport, KnownSet, StepRecord};
pub use env::{Environment, GridWorldSpec, Rng};
pub use error::{Error, Result};
pub use harness::{BenchSummary, RunResult};
pub use known::KnownMdp;
pub use mdp::{Mdp, Policy, QTable};
