use ndarray::{Array2, Axis};

use super::batch::{Batch, Targets};
use super::config::{LossWeights, Variant};
use super::nets::Networks;
use crate::envs::N_ACTIONS;
use crate::error::{Error, Result};
use crate::nn::Categorical;

/// Loss components for one minibatch, each normalised per team step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    /// Clipped surrogate plus the entropy bonus, summed over controlled agents.
    pub policy: f64,
    /// Mean policy entropy over controlled rows.
    pub entropy: f64,
    /// `½(V - target)²` summed over all agents.
    pub critic: f64,
    pub efficiency: f64,
    pub total: f64,
    pub clip_fraction: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.policy, self.entropy, self.critic, self.efficiency, self.total]
            .iter()
            .all(|x| x.is_finite())
    }
}

/// `½ Σ (v - y)² / len`.
pub fn critic_loss(values: &[f64], targets: &[f64]) -> f64 {
    values.iter().zip(targets).map(|(v, y)| 0.5 * (v - y).powi(2)).sum::<f64>() / values.len().max(1) as f64
}

/// `½ (G - Σ_i V_i)²` and its gradient with respect to each `V_i`.
pub fn efficiency_loss(team_target: f64, values: &[f64]) -> (f64, Vec<f64>) {
    let diff = team_target - values.iter().sum::<f64>();
    (0.5 * diff * diff, vec![-diff; values.len()])
}

/// One controlled row of the PPO objective: returns `(-surrogate, entropy,
/// clipped, d(-surrogate - c·H)/d logits)`.
pub fn ppo_row(
    logits: &[f64],
    action: usize,
    behavior_logp: f64,
    advantage: f64,
    clip: f64,
    entropy_coef: f64,
) -> Result<(f64, f64, bool, Vec<f64>)> {
    let dist = Categorical::from_logits(logits)?;
    let logp = dist.log_prob(action)?;
    let ratio = (logp - behavior_logp).exp();
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    let surrogate = unclipped.min(clipped);
    let clip_active = (advantage > 0.0 && ratio > 1.0 + clip) || (advantage < 0.0 && ratio < 1.0 - clip);
    let entropy = dist.entropy();
    let mut grad: Vec<f64> = dist.entropy_grad().into_iter().map(|g| -entropy_coef * g).collect();
    if !clip_active {
        for (g, d) in grad.iter_mut().zip(dist.log_prob_grad(action)) {
            *g -= advantage * ratio * d;
        }
    }
    Ok((-surrogate, entropy, clip_active, grad))
}

fn rows_of(steps: &[usize], n: usize) -> Vec<usize> {
    steps.iter().flat_map(|&s| (0..n).map(move |i| s * n + i)).collect()
}

/// Policy, critic and efficiency terms on the given team steps:
/// `(1/T) Σ_t [Σ_{i∈C̃_t} L_θ + β1 Σ_{i∈Ñ} L_c + β2 L^e]`, the last term for
/// the Shapley Machine only. With `backward` set, gradients are accumulated
/// into the actor and critic; the encoder embedding is treated as an input.
pub fn rl_loss(
    nets: &mut Networks,
    batch: &Batch,
    targets: &Targets,
    steps: &[usize],
    variant: Variant,
    w: &LossWeights,
    backward: bool,
) -> Result<LossBreakdown> {
    if steps.is_empty() {
        return Err(Error::invalid("loss over zero team steps"));
    }
    let n = batch.n_agents;
    let k = steps.len() as f64;
    let rows = rows_of(steps, n);
    let x = batch.inputs.select(Axis(0), &rows);
    let z = nets.head_inputs(x.view())?;

    let (v, critic_tape) = nets.critic.forward(z.view())?;
    let mut dv = Array2::zeros((rows.len(), 1));
    let mut critic = 0.0;
    for (q, &r) in rows.iter().enumerate() {
        let diff = v[[q, 0]] - targets.critic[r];
        critic += 0.5 * diff * diff;
        dv[[q, 0]] = w.beta1 * diff / k;
    }
    critic /= k;

    let mut efficiency = 0.0;
    let use_eff = variant.uses_efficiency_loss();
    if use_eff {
        for (q, &s) in steps.iter().enumerate() {
            let vs: Vec<f64> = (0..n).map(|i| v[[q * n + i, 0]]).collect();
            let (l, g) = efficiency_loss(targets.team[s], &vs);
            efficiency += l;
            for i in 0..n {
                dv[[q * n + i, 0]] += w.beta2 * g[i] / k;
            }
        }
        efficiency /= k;
    }

    let controlled: Vec<usize> = (0..rows.len()).filter(|&q| batch.controlled[rows[q]]).collect();
    let mut policy = 0.0;
    let mut entropy = 0.0;
    let mut clipped = 0usize;
    let mut actor_grad = None;
    if !controlled.is_empty() {
        let zc = z.select(Axis(0), &controlled);
        let (logits, actor_tape) = nets.actor.forward(zc.view())?;
        let mut dl = Array2::zeros((controlled.len(), N_ACTIONS));
        for (c, &q) in controlled.iter().enumerate() {
            let r = rows[q];
            let row = logits.row(c);
            let (neg_surr, h, clip, g) = ppo_row(
                row.as_slice().expect("standard layout"),
                batch.actions[r],
                batch.behavior_logp[r],
                targets.advantages[r],
                w.clip_epsilon,
                w.entropy_coef,
            )?;
            policy += neg_surr - w.entropy_coef * h;
            entropy += h;
            clipped += usize::from(clip);
            for (a, ga) in g.into_iter().enumerate() {
                dl[[c, a]] = ga / k;
            }
        }
        actor_grad = Some((actor_tape, dl));
    }
    policy /= k;
    let n_ctl = controlled.len().max(1) as f64;
    let mut total = policy + w.beta1 * critic;
    if use_eff {
        total += w.beta2 * efficiency;
    }
    let out = LossBreakdown {
        policy,
        entropy: entropy / n_ctl,
        critic,
        efficiency,
        total,
        clip_fraction: clipped as f64 / n_ctl,
    };
    if backward && out.is_finite() {
        nets.critic.backward(&critic_tape, dv.view())?;
        if let Some((tape, dl)) = actor_grad {
            nets.actor.backward(&tape, dl.view())?;
        }
    }
    Ok(out)
}

/// Agent-model loss on the given team steps: squared reconstruction error of
/// the other agents' observations plus the negative log-likelihood of their
/// actions, averaged over rows. Gradients reach the encoder through both
/// decoders.
pub fn agent_model_loss(nets: &mut Networks, batch: &Batch, steps: &[usize], backward: bool) -> Result<f64> {
    if steps.is_empty() {
        return Err(Error::invalid("loss over zero team steps"));
    }
    let n = batch.n_agents;
    let od = batch.obs_dim;
    let rows = rows_of(steps, n);
    let count = rows.len() as f64;
    let x = batch.inputs.select(Axis(0), &rows);
    let (e, enc_tape) = nets.encoder.forward(x.view())?;
    let (pred, obs_tape) = nets.obs_decoder.forward(e.view())?;
    let (logits, act_tape) = nets.act_decoder.forward(e.view())?;

    let mut d_pred = Array2::zeros(pred.dim());
    let mut d_logits = Array2::zeros(logits.dim());
    let mut loss = 0.0;
    for (q, &r) in rows.iter().enumerate() {
        let s = r / n;
        let i = r % n;
        for (slot, j) in (0..n).filter(|&j| j != i).enumerate() {
            let other = s * n + j;
            for d in 0..od {
                let diff = pred[[q, slot * od + d]] - batch.obs[[other, d]];
                loss += diff * diff;
                d_pred[[q, slot * od + d]] = 2.0 * diff / count;
            }
            let lg: Vec<f64> = (0..N_ACTIONS).map(|a| logits[[q, slot * N_ACTIONS + a]]).collect();
            let dist = Categorical::from_logits(&lg)?;
            let a = batch.actions[other];
            loss -= dist.log_prob(a)?;
            for (b, g) in dist.log_prob_grad(a).into_iter().enumerate() {
                d_logits[[q, slot * N_ACTIONS + b]] = -g / count;
            }
        }
    }
    loss /= count;
    if backward && loss.is_finite() {
        let mut de = nets.obs_decoder.backward(&obs_tape, d_pred.view())?;
        de += &nets.act_decoder.backward(&act_tape, d_logits.view())?;
        nets.encoder.backward(&enc_tape, de.view())?;
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_one_gives_minus_advantage() {
        let logits = [0.3, -0.2, 0.1, 0.0, 0.5];
        let d = Categorical::from_logits(&logits).unwrap();
        let lp = d.log_prob(2).unwrap();
        let (neg, h, clip, _) = ppo_row(&logits, 2, lp, 1.7, 0.2, 0.0).unwrap();
        assert!((neg + 1.7).abs() < 1e-12);
        assert!(!clip);
        assert!((h - d.entropy()).abs() < 1e-15);
    }

    #[test]
    fn clipped_branch_has_no_surrogate_gradient() {
        let logits = [0.3, -0.2, 0.1, 0.0, 0.5];
        let d = Categorical::from_logits(&logits).unwrap();
        // ratio = 1 + 2ε with a positive advantage.
        let old = d.log_prob(1).unwrap() - (1.4f64).ln();
        let (_, _, clip, g) = ppo_row(&logits, 1, old, 2.0, 0.2, 0.0).unwrap();
        assert!(clip);
        assert!(g.iter().all(|&x| x == 0.0));
        // Finite differences agree: the clipped objective is flat here.
        let eps = 1e-6;
        for k in 0..5 {
            let mut up = logits;
            up[k] += eps;
            let mut dn = logits;
            dn[k] -= eps;
            let fu = ppo_row(&up, 1, old, 2.0, 0.2, 0.0).unwrap().0;
            let fd = ppo_row(&dn, 1, old, 2.0, 0.2, 0.0).unwrap().0;
            assert!(((fu - fd) / (2.0 * eps)).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_advantage_leaves_only_entropy() {
        let logits = [1.0, 0.0, 0.0, 0.0, 0.0];
        let (neg, _, _, g) = ppo_row(&logits, 0, -1.0, 0.0, 0.2, 0.0).unwrap();
        assert_eq!(neg, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn efficiency_gradient_is_shared() {
        let (l, g) = efficiency_loss(3.0, &[0.5, 1.0, 0.25]);
        assert!((l - 0.5 * 1.25f64.powi(2)).abs() < 1e-15);
        assert_eq!(g, vec![-1.25; 3]);
        let (l2, _) = efficiency_loss(3.0, &[0.25, 0.5, 1.0]);
        assert_eq!(l, l2);
    }

    #[test]
    fn critic_loss_is_mean_half_square() {
        assert_eq!(critic_loss(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(critic_loss(&[1.0, 3.0], &[0.0, 1.0]), (0.5 + 2.0) / 2.0);
    }
}
