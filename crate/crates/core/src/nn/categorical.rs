use rand::Rng;

use crate::error::{Error, Result};

/// Categorical distribution over `0..len` parameterised by logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Categorical {
    log_probs: Vec<f64>,
}

impl Categorical {
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::invalid("empty logit vector"));
        }
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("logits {logits:?}")));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        Ok(Self {
            log_probs: logits.iter().map(|x| x - lse).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn log_prob(&self, action: usize) -> Result<f64> {
        self.log_probs.get(action).copied().ok_or(Error::OutOfRange {
            what: "action",
            index: action,
            len: self.len(),
        })
    }

    pub fn entropy(&self) -> f64 {
        let h: f64 = self
            .log_probs
            .iter()
            .map(|&l| {
                let p = l.exp();
                if p > 0.0 {
                    -p * l
                } else {
                    0.0
                }
            })
            .sum();
        h.clamp(0.0, (self.len() as f64).ln())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (a, l) in self.log_probs.iter().enumerate() {
            acc += l.exp();
            if u < acc {
                return a;
            }
        }
        // Rounding left a sliver above the cumulative sum: take the last
        // action with nonzero mass.
        self.log_probs
            .iter()
            .rposition(|l| l.exp() > 0.0)
            .unwrap_or(self.len() - 1)
    }

    /// Most probable action, lowest index on ties.
    pub fn greedy(&self) -> usize {
        let mut best = 0;
        for (a, &l) in self.log_probs.iter().enumerate() {
            if l > self.log_probs[best] {
                best = a;
            }
        }
        best
    }

    /// `d log pi(a) / d logits = onehot(a) - p`.
    pub fn log_prob_grad(&self, action: usize) -> Vec<f64> {
        let mut g: Vec<f64> = self.probs().into_iter().map(|p| -p).collect();
        g[action] += 1.0;
        g
    }

    /// `d H / d logits = -p (log p + H)`.
    pub fn entropy_grad(&self) -> Vec<f64> {
        let h = self.entropy();
        self.log_probs.iter().map(|&l| -l.exp() * (l + h)).collect()
    }
}
