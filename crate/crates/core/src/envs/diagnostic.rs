use super::{Action, Step};
use crate::error::{Error, Result};

pub(crate) const OBS_DIM: usize = 1;

/// One-round coordination game: reward 1 iff every agent plays action 0.
#[derive(Clone, Debug)]
pub struct DiagnosticEnv {
    n_agents: usize,
    done: bool,
}

impl DiagnosticEnv {
    pub fn new(n_agents: usize) -> Result<Self> {
        if !(1..=5).contains(&n_agents) {
            return Err(Error::Config(format!("diagnostic game needs 1..=5 agents, got {n_agents}")));
        }
        Ok(Self { n_agents, done: true })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn reset(&mut self) {
        self.done = false;
    }

    pub fn step(&mut self, actions: &[Action]) -> Result<Step> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        if actions.len() != self.n_agents {
            return Err(Error::DimensionMismatch {
                what: "joint action",
                expected: self.n_agents,
                got: actions.len(),
            });
        }
        self.done = true;
        let win = actions.iter().all(|a| *a == Action::Stay);
        Ok(Step {
            reward: if win { 1.0 } else { 0.0 },
            terminated: true,
            truncated: false,
        })
    }

    /// `(1/5)^n`: expected reward when every agent plays uniformly.
    pub fn random_policy_value(&self) -> f64 {
        (1.0 / Action::ALL.len() as f64).powi(self.n_agents as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn only_all_zero_pays() {
        let mut env = DiagnosticEnv::new(3).unwrap();
        env.reset();
        assert_eq!(env.step(&[Action::Stay; 3]).unwrap().reward, 1.0);
        assert!(env.step(&[Action::Stay; 3]).is_err());
        for i in 0..3 {
            for a in &Action::ALL[1..] {
                let mut joint = [Action::Stay; 3];
                joint[i] = *a;
                env.reset();
                let s = env.step(&joint).unwrap();
                assert_eq!(s.reward, 0.0);
                assert!(s.terminated);
            }
        }
    }

    #[test]
    fn random_value_closed_form() {
        // Exhaustive enumeration over 5^3 joint actions.
        let mut env = DiagnosticEnv::new(3).unwrap();
        let mut total = 0.0;
        for a in Action::ALL {
            for b in Action::ALL {
                for c in Action::ALL {
                    env.reset();
                    total += env.step(&[a, b, c]).unwrap().reward;
                }
            }
        }
        assert!((total / 125.0 - env.random_policy_value()).abs() < 1e-15);
    }
}
