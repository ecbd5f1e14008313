use serde::{Deserialize, Serialize};

use super::mlp::ParameterBlock;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.99,
            epsilon: 1e-5,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if !ok {
            return Err(Error::invalid(format!("bad Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// First and second moments for one set of parameter blocks.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, blocks: &[ParameterBlock]) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step: 0,
            m: blocks.iter().map(|b| vec![0.0; b.len()]).collect(),
            v: blocks.iter().map(|b| vec![0.0; b.len()]).collect(),
        })
    }

    /// One bias-corrected Adam update, then zeroes the gradients.
    ///
    /// A non-finite gradient anywhere rejects the whole update: parameters and
    /// moments are left untouched, gradients are zeroed, and `NonFinite` is
    /// returned.
    pub fn step(&mut self, blocks: &mut [ParameterBlock]) -> Result<()> {
        if blocks.len() != self.m.len() || blocks.iter().zip(&self.m).any(|(b, m)| b.len() != m.len()) {
            return Err(Error::DimensionMismatch {
                what: "Adam moments",
                expected: self.m.iter().map(Vec::len).sum(),
                got: blocks.iter().map(ParameterBlock::len).sum(),
            });
        }
        if let Some(bad) = blocks.iter().find(|b| b.grads.iter().any(|g| !g.is_finite())) {
            let name = bad.name.clone();
            zero(blocks);
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for ((block, m), v) in blocks.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..block.len() {
                let g = block.grads[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                block.values[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        zero(blocks);
        if let Some(bad) = blocks.iter().find(|b| b.values.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite(format!("parameters of {}", bad.name)));
        }
        Ok(())
    }
}

fn zero(blocks: &mut [ParameterBlock]) {
    for b in blocks {
        b.grads.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Global L2 norm of the gradients across every block given.
pub fn grad_norm<'a>(blocks: impl IntoIterator<Item = &'a ParameterBlock>) -> f64 {
    blocks
        .into_iter()
        .flat_map(|b| b.grads.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// Rescales gradients so that their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(blocks: &mut [&mut [ParameterBlock]], max_norm: f64) -> f64 {
    let norm = grad_norm(blocks.iter().flat_map(|bs| bs.iter()));
    if norm.is_finite() && norm > max_norm && max_norm > 0.0 {
        let scale = max_norm / norm;
        for bs in blocks.iter_mut() {
            for b in bs.iter_mut() {
                b.grads.iter_mut().for_each(|g| *g *= scale);
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> Vec<ParameterBlock> {
        vec![ParameterBlock::new("x", vec![1], vec![x])]
    }

    #[test]
    fn zero_grads_leave_parameters() {
        let mut p = scalar(1.5);
        let mut adam = AdamState::new(AdamConfig::default(), &p).unwrap();
        for _ in 0..10 {
            adam.step(&mut p).unwrap();
        }
        assert_eq!(p[0].values[0], 1.5);
    }

    #[test]
    fn constant_gradient_moves_against_its_sign() {
        let mut p = scalar(0.0);
        let mut adam = AdamState::new(AdamConfig::default(), &p).unwrap();
        for _ in 0..100 {
            p[0].grads[0] = 2.0;
            adam.step(&mut p).unwrap();
            assert_eq!(p[0].grads[0], 0.0);
        }
        assert!(p[0].values[0] < 0.0);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut p = vec![ParameterBlock::new("x", vec![2], vec![3.0, -2.0])];
        let cfg = AdamConfig {
            learning_rate: 1e-2,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(cfg, &p).unwrap();
        let target = [0.5, 1.0];
        for _ in 0..5000 {
            for (i, t) in target.iter().enumerate() {
                p[0].grads[i] = 2.0 * (p[0].values[i] - t);
            }
            adam.step(&mut p).unwrap();
        }
        for (v, t) in p[0].values.iter().zip(&target) {
            assert!((v - t).abs() < 1e-3, "{:?}", p[0].values);
        }
    }

    #[test]
    fn nan_gradient_is_rejected_without_update() {
        let mut p = scalar(1.0);
        let mut adam = AdamState::new(AdamConfig::default(), &p).unwrap();
        p[0].grads[0] = f64::NAN;
        assert!(matches!(adam.step(&mut p), Err(Error::NonFinite(_))));
        assert_eq!(p[0].values[0], 1.0);
        assert_eq!(p[0].grads[0], 0.0);
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut a = vec![ParameterBlock::new("a", vec![2], vec![0.0; 2])];
        let mut b = vec![ParameterBlock::new("b", vec![1], vec![0.0])];
        a[0].grads = vec![3.0, 0.0];
        b[0].grads = vec![4.0];
        let before = clip_grad_norm(&mut [&mut a, &mut b], 1.0);
        assert_eq!(before, 5.0);
        assert!((grad_norm(a.iter().chain(&b)) - 1.0).abs() < 1e-12);
    }
}
