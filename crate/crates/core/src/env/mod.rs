//! Environments the agent is driven against.

mod gridworld;
mod sampler;

pub use gridworld::{
    compile_gridworld, default_paper_gridworld, load_gridworld_spec, Direction, GridWorldSpec,
    DOUBLE_WALL, OPEN,
};
pub use sampler::{env_step, Rng};

use crate::error::{Error, Result};
use crate::mdp::Mdp;

/// A compiled MDP plus the state every run starts in.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    pub mdp: Mdp,
    pub start: usize,
}

impl Environment {
    pub fn from_grid(spec: &GridWorldSpec) -> Result<Self> {
        Ok(Environment {
            mdp: compile_gridworld(spec)?,
            start: spec.start_cell - 1,
        })
    }

    pub fn from_mdp(mdp: Mdp, start: usize) -> Result<Self> {
        if start >= mdp.num_states() {
            return Err(Error::InvalidArgument(format!("start state {start} out of range")));
        }
        Ok(Environment { mdp, start })
    }

    /// Parses either a grid-world spec or an MDP interchange file; MDP files
    /// start in state 0.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if value.get("width").is_some() {
            Self::from_grid(&GridWorldSpec::from_json(text)?)
        } else {
            Self::from_mdp(Mdp::from_json(text)?, 0)
        }
    }

    pub fn default_grid() -> Self {
        Self::from_grid(&default_paper_gridworld()).expect("default layout is valid")
    }
}
