//! Common-reward environments: the grid pursuit task and a one-step
//! coordination game for smoke tests.

mod diagnostic;
mod pursuit;
pub mod replay;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use diagnostic::DiagnosticEnv;
pub use pursuit::{Cell, PursuitConfig, PursuitEnv, PursuitState, OBS_DIM};

use crate::error::Result;

pub const N_ACTIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    Stay = 0,
    Up = 1,
    Down = 2,
    Left = 3,
    Right = 4,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [Action::Stay, Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Grid displacement; `Up` increases `y`, `Right` increases `x`.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Action::Stay => (0, 0),
            Action::Up => (0, 1),
            Action::Down => (0, -1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
        }
    }
}

/// Outcome of one joint step. The reward is common to every agent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub reward: f64,
    /// The task ended (capture, or the single round of the diagnostic game).
    pub terminated: bool,
    /// The step limit was hit without termination.
    pub truncated: bool,
}

impl Step {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Scripted behaviours the environment can compute from one agent's
/// observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Heuristic {
    Chase,
    Flank,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvConfig {
    Pursuit(PursuitConfig),
    Diagnostic { n_agents: usize },
}

impl EnvConfig {
    pub fn n_agents(&self) -> usize {
        match self {
            EnvConfig::Pursuit(c) => c.n_agents,
            EnvConfig::Diagnostic { n_agents } => *n_agents,
        }
    }

    pub fn build(&self) -> Result<Env> {
        Ok(match self {
            EnvConfig::Pursuit(c) => Env::Pursuit(PursuitEnv::new(c.clone())?),
            EnvConfig::Diagnostic { n_agents } => Env::Diagnostic(DiagnosticEnv::new(*n_agents)?),
        })
    }
}

#[derive(Clone, Debug)]
pub enum Env {
    Pursuit(PursuitEnv),
    Diagnostic(DiagnosticEnv),
}

impl Env {
    pub fn n_agents(&self) -> usize {
        match self {
            Env::Pursuit(e) => e.config().n_agents,
            Env::Diagnostic(e) => e.n_agents(),
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            Env::Pursuit(_) => OBS_DIM,
            Env::Diagnostic(_) => diagnostic::OBS_DIM,
        }
    }

    pub fn episode_limit(&self) -> usize {
        match self {
            Env::Pursuit(e) => e.config().episode_limit,
            Env::Diagnostic(_) => 1,
        }
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        match self {
            Env::Pursuit(e) => e.reset(rng).map(|_| ()),
            Env::Diagnostic(e) => {
                e.reset();
                Ok(())
            }
        }
    }

    pub fn step<R: Rng + ?Sized>(&mut self, actions: &[Action], rng: &mut R) -> Result<Step> {
        match self {
            Env::Pursuit(e) => e.step(actions, rng),
            Env::Diagnostic(e) => e.step(actions),
        }
    }

    /// Agent `i`'s observation; `full` lifts the visibility mask.
    pub fn observe(&self, agent: usize, full: bool) -> Vec<f64> {
        match self {
            Env::Pursuit(e) => e.observe(agent, full),
            Env::Diagnostic(_) => vec![1.0; diagnostic::OBS_DIM],
        }
    }

    pub fn heuristic_action<R: Rng + ?Sized>(&self, obs: &[f64], h: Heuristic, rng: &mut R) -> Action {
        match self {
            Env::Pursuit(e) => e.heuristic_action(obs, h, rng),
            Env::Diagnostic(_) => Action::Stay,
        }
    }

    pub fn is_done(&self) -> bool {
        match self {
            Env::Pursuit(e) => e.is_done(),
            Env::Diagnostic(e) => e.is_done(),
        }
    }

    /// One-line description of the current state for replay logs.
    pub fn snapshot(&self) -> String {
        match self {
            Env::Pursuit(e) => e.state().to_string(),
            Env::Diagnostic(e) => format!("round={}", u8::from(e.is_done())),
        }
    }
}
