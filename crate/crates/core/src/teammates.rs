//! The uncontrolled-teammate pool and per-episode team sampling.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{Action, Env, Heuristic};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    GreedyChase,
    Flanker,
    Random,
    Lazy,
    NoisyGreedy,
}

pub const LAZY_STAY: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncontrolledPolicy {
    pub id: String,
    pub kind: PolicyKind,
    #[serde(default)]
    pub noise: f64,
}

impl UncontrolledPolicy {
    pub fn new(kind: PolicyKind) -> Self {
        let id = serde_json::to_value(kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        Self { id, kind, noise: 0.0 }
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Config(format!(
                "policy `{}`: noise {} outside [0, 1]",
                self.id, self.noise
            )));
        }
        Ok(())
    }

    /// Acts on `obs` only, which is the agent's own (possibly masked) view.
    pub fn act<R: Rng + ?Sized>(&self, env: &Env, obs: &[f64], rng: &mut R) -> Action {
        let uniform = |rng: &mut R| Action::ALL[rng.gen_range(0..Action::ALL.len())];
        match self.kind {
            PolicyKind::GreedyChase => env.heuristic_action(obs, Heuristic::Chase, rng),
            PolicyKind::Flanker => env.heuristic_action(obs, Heuristic::Flank, rng),
            PolicyKind::Random => uniform(rng),
            PolicyKind::Lazy => {
                if rng.gen::<f64>() < LAZY_STAY {
                    Action::Stay
                } else {
                    env.heuristic_action(obs, Heuristic::Chase, rng)
                }
            }
            PolicyKind::NoisyGreedy => {
                if rng.gen::<f64>() < self.noise {
                    uniform(rng)
                } else {
                    env.heuristic_action(obs, Heuristic::Chase, rng)
                }
            }
        }
    }
}

/// The five scripted groups with the noise used by default.
pub fn default_pool() -> Vec<UncontrolledPolicy> {
    vec![
        UncontrolledPolicy::new(PolicyKind::GreedyChase),
        UncontrolledPolicy::new(PolicyKind::Flanker),
        UncontrolledPolicy::new(PolicyKind::Random),
        UncontrolledPolicy::new(PolicyKind::Lazy),
        UncontrolledPolicy::new(PolicyKind::NoisyGreedy).with_noise(0.3),
    ]
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TeamComposition {
    pub n_total: usize,
    /// Sorted controlled slot indices.
    pub controlled: Vec<usize>,
    /// Slot -> index into the pool.
    pub uncontrolled: BTreeMap<usize, usize>,
}

impl TeamComposition {
    pub fn is_controlled(&self, slot: usize) -> bool {
        self.controlled.binary_search(&slot).is_ok()
    }

    pub fn n_uncontrolled(&self) -> usize {
        self.uncontrolled.len()
    }

    /// Every slot controlled; used for the closed training setting.
    pub fn all_controlled(n_total: usize) -> Self {
        Self {
            n_total,
            controlled: (0..n_total).collect(),
            uncontrolled: BTreeMap::new(),
        }
    }
}

/// `ũ ~ U{1..n-1}`, one pool group for all `ũ` uncontrolled slots, slots
/// drawn without replacement.
pub fn sample_team<R: Rng + ?Sized>(
    rng: &mut R,
    n_total: usize,
    pool: &[UncontrolledPolicy],
) -> Result<TeamComposition> {
    if pool.is_empty() {
        return Err(Error::invalid("uncontrolled pool is empty"));
    }
    if n_total < 2 {
        return Err(Error::invalid(format!(
            "open teams need at least 2 slots, got {n_total}"
        )));
    }
    let u = rng.gen_range(1..n_total);
    let group = rng.gen_range(0..pool.len());
    let mut slots: Vec<usize> = index::sample(rng, n_total, u).into_vec();
    slots.sort_unstable();
    let controlled = (0..n_total).filter(|s| slots.binary_search(s).is_err()).collect();
    Ok(TeamComposition {
        n_total,
        controlled,
        uncontrolled: slots.into_iter().map(|s| (s, group)).collect(),
    })
}
