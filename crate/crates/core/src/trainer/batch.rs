use ndarray::Array2;
use rand::Rng;

use super::config::{CriticTarget, ShapingScope, Variant};
use crate::envs::N_ACTIONS;
use crate::error::{Error, Result};
use crate::returns::{Lane, ReturnConfig};

/// How a chunk of consecutive steps ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChunkEnd {
    /// The task ended; the bootstrap value is zero.
    Terminated,
    /// The step limit was hit; bootstrap from the final state.
    Truncated,
    /// The rollout segment ran out mid-episode; bootstrap from the next state.
    Cut,
}

/// Consecutive steps of one episode from one worker, with a fixed team.
/// Per-step arrays are laid out step-major: index `t * n + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Chunk {
    pub len: usize,
    pub inputs: Vec<f64>,
    /// Normalised observations, the agent-model reconstruction targets.
    pub obs: Vec<f64>,
    pub actions: Vec<usize>,
    /// Behaviour log-probabilities; zero for uncontrolled slots.
    pub behavior_logp: Vec<f64>,
    pub controlled: Vec<bool>,
    pub rewards: Vec<f64>,
    pub end: ChunkEnd,
    /// Inputs of the state after the last step when `end` is not terminal.
    pub bootstrap: Option<Vec<f64>>,
}

/// Chunks flattened into matrices. Row `s * n + i` is agent `i` at team step
/// `s`; team steps run over all chunks in order.
#[derive(Clone, Debug)]
pub struct Batch {
    pub n_agents: usize,
    pub in_dim: usize,
    pub obs_dim: usize,
    pub inputs: Array2<f64>,
    pub obs: Array2<f64>,
    pub actions: Vec<usize>,
    pub behavior_logp: Vec<f64>,
    pub controlled: Vec<bool>,
    /// Raw team rewards, one per team step.
    pub rewards: Vec<f64>,
    /// `(first team step, length, end, bootstrap row block)` per chunk.
    pub chunks: Vec<ChunkSpan>,
    /// Bootstrap inputs, `n` rows per non-terminal chunk.
    pub bootstrap_inputs: Array2<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChunkSpan {
    pub start: usize,
    pub len: usize,
    pub end: ChunkEnd,
    pub bootstrap: Option<usize>,
}

impl Batch {
    pub fn from_chunks(chunks: &[Chunk], n_agents: usize, in_dim: usize, obs_dim: usize) -> Result<Self> {
        let steps: usize = chunks.iter().map(|c| c.len).sum();
        if steps == 0 {
            return Err(Error::invalid("empty rollout batch"));
        }
        let n_boot = chunks.iter().filter(|c| c.bootstrap.is_some()).count();
        let mut inputs = Vec::with_capacity(steps * n_agents * in_dim);
        let mut obs = Vec::with_capacity(steps * n_agents * obs_dim);
        let mut boot = Vec::with_capacity(n_boot * n_agents * in_dim);
        let mut actions = Vec::with_capacity(steps * n_agents);
        let mut logp = Vec::with_capacity(steps * n_agents);
        let mut controlled = Vec::with_capacity(steps * n_agents);
        let mut rewards = Vec::with_capacity(steps);
        let mut spans = Vec::with_capacity(chunks.len());
        let mut start = 0;
        let mut boot_count = 0;
        for c in chunks {
            let rows = c.len * n_agents;
            let ok = c.len > 0
                && c.inputs.len() == rows * in_dim
                && c.obs.len() == rows * obs_dim
                && c.actions.len() == rows
                && c.behavior_logp.len() == rows
                && c.controlled.len() == n_agents
                && c.rewards.len() == c.len
                && (c.end == ChunkEnd::Terminated) == c.bootstrap.is_none()
                && c.bootstrap.as_ref().is_none_or(|b| b.len() == n_agents * in_dim);
            if !ok {
                return Err(Error::invalid("inconsistent chunk dimensions"));
            }
            inputs.extend_from_slice(&c.inputs);
            obs.extend_from_slice(&c.obs);
            actions.extend_from_slice(&c.actions);
            logp.extend_from_slice(&c.behavior_logp);
            for _ in 0..c.len {
                controlled.extend_from_slice(&c.controlled);
            }
            rewards.extend_from_slice(&c.rewards);
            let bootstrap = c.bootstrap.as_ref().map(|b| {
                boot.extend_from_slice(b);
                boot_count += 1;
                boot_count - 1
            });
            spans.push(ChunkSpan {
                start,
                len: c.len,
                end: c.end,
                bootstrap,
            });
            start += c.len;
        }
        let rows = steps * n_agents;
        Ok(Self {
            n_agents,
            in_dim,
            obs_dim,
            inputs: Array2::from_shape_vec((rows, in_dim), inputs).expect("sized above"),
            obs: Array2::from_shape_vec((rows, obs_dim), obs).expect("sized above"),
            actions,
            behavior_logp: logp,
            controlled,
            rewards,
            chunks: spans,
            bootstrap_inputs: Array2::from_shape_vec((n_boot * n_agents, in_dim), boot).expect("sized above"),
        })
    }

    pub fn n_steps(&self) -> usize {
        self.rewards.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rewards.len() * self.n_agents
    }

    /// Random chunks with arbitrary contents, for property checks.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_agents: usize, in_dim: usize, obs_dim: usize, n_chunks: usize) -> Self {
        let chunks: Vec<Chunk> = (0..n_chunks)
            .map(|_| {
                let len = rng.gen_range(1..12);
                let rows = len * n_agents;
                let end = match rng.gen_range(0..3) {
                    0 => ChunkEnd::Terminated,
                    1 => ChunkEnd::Truncated,
                    _ => ChunkEnd::Cut,
                };
                let mut controlled: Vec<bool> = (0..n_agents).map(|_| rng.gen_bool(0.6)).collect();
                controlled[rng.gen_range(0..n_agents)] = true;
                Chunk {
                    len,
                    inputs: (0..rows * in_dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    obs: (0..rows * obs_dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    actions: (0..rows).map(|_| rng.gen_range(0..N_ACTIONS)).collect(),
                    behavior_logp: (0..rows).map(|_| -rng.gen_range(0.5..3.0)).collect(),
                    rewards: (0..len).map(|_| if rng.gen_bool(0.3) { 1.0 } else { 0.0 }).collect(),
                    controlled,
                    end,
                    bootstrap: (end != ChunkEnd::Terminated)
                        .then(|| (0..n_agents * in_dim).map(|_| rng.gen_range(-1.0..1.0)).collect()),
                }
            })
            .collect();
        Self::from_chunks(&chunks, n_agents, in_dim, obs_dim).expect("consistent by construction")
    }

    /// Agent `i`'s `len + 1` values over one chunk, bootstrap last.
    fn value_lane(&self, span: &ChunkSpan, agent: usize, values: &ValueTable) -> Vec<f64> {
        let n = self.n_agents;
        let mut v: Vec<f64> = (0..span.len).map(|t| values.rows[(span.start + t) * n + agent]).collect();
        v.push(match span.bootstrap {
            Some(b) => values.bootstrap[b * n + agent],
            None => 0.0,
        });
        v
    }
}

/// Critic outputs for every step row and every bootstrap row.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    pub rows: Vec<f64>,
    pub bootstrap: Vec<f64>,
}

/// `Σ_{j≠i} (V_j(s_t) - γ V_j(s_{t+1}))` for every row, before any scaling.
pub fn shaping_sums(batch: &Batch, values: &ValueTable, gamma: f64, scope: ShapingScope) -> Vec<f64> {
    let n = batch.n_agents;
    let mut out = vec![0.0; batch.n_rows()];
    for span in &batch.chunks {
        let lanes: Vec<Vec<f64>> = (0..n).map(|j| batch.value_lane(span, j, values)).collect();
        for t in 0..span.len {
            let s = span.start + t;
            let deltas: Vec<f64> = (0..n).map(|j| lanes[j][t] - gamma * lanes[j][t + 1]).collect();
            for i in 0..n {
                out[s * n + i] = (0..n)
                    .filter(|&j| j != i && (scope == ShapingScope::AllAgents || batch.controlled[s * n + j]))
                    .map(|j| deltas[j])
                    .sum();
            }
        }
    }
    out
}

/// `R_{t,i} = R_t - α · shaping_{t,i}` for one step, given the (already
/// standardised) shaping term.
pub fn shaped_reward(team_reward: f64, alpha: f64, shaping: f64) -> f64 {
    team_reward - alpha * shaping
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetConfig {
    pub variant: Variant,
    pub gamma: f64,
    pub lambda: f64,
    pub m: usize,
    pub gae_lambda: f64,
    pub alpha: f64,
    pub adv_std: bool,
}

/// Everything the losses treat as constants.
#[derive(Clone, Debug, PartialEq)]
pub struct Targets {
    /// Per row: reward the agent's targets are built from.
    pub rewards: Vec<f64>,
    pub critic: Vec<f64>,
    /// Zero on uncontrolled rows.
    pub advantages: Vec<f64>,
    /// Team λ-return per team step, for the efficiency loss.
    pub team: Vec<f64>,
}

/// `team_rewards` are per team step (already standardised if that is on);
/// `shaping` holds per-row shaping terms (already standardised) and is used
/// only by variants with shaped rewards.
pub fn compute_targets(
    batch: &Batch,
    values: &ValueTable,
    team_rewards: &[f64],
    shaping: Option<&[f64]>,
    cfg: &TargetConfig,
) -> Result<Targets> {
    let n = batch.n_agents;
    if team_rewards.len() != batch.n_steps() || values.rows.len() != batch.n_rows() {
        return Err(Error::DimensionMismatch {
            what: "target inputs",
            expected: batch.n_rows(),
            got: values.rows.len(),
        });
    }
    let ret = ReturnConfig::new(cfg.gamma, cfg.lambda, cfg.m)?;
    let shaped = cfg.variant.uses_shaped_reward();
    if shaped && shaping.is_none_or(|s| s.len() != batch.n_rows()) {
        return Err(Error::invalid("shaped-reward variant needs one shaping term per row"));
    }
    let mut rewards = vec![0.0; batch.n_rows()];
    let mut critic = vec![0.0; batch.n_rows()];
    let mut advantages = vec![0.0; batch.n_rows()];
    let mut team = vec![0.0; batch.n_steps()];
    for span in &batch.chunks {
        let r_team = &team_rewards[span.start..span.start + span.len];
        let lanes: Vec<Vec<f64>> = (0..n).map(|i| batch.value_lane(span, i, values)).collect();
        for i in 0..n {
            let r: Vec<f64> = match shaping {
                Some(sh) if shaped => (0..span.len)
                    .map(|t| shaped_reward(r_team[t], cfg.alpha, sh[(span.start + t) * n + i]))
                    .collect(),
                _ => r_team.to_vec(),
            };
            let lane = Lane::new(&r, &lanes[i])?;
            let y = match cfg.variant.critic_target() {
                CriticTarget::Ttd => lane.ttd_all(&ret),
                CriticTarget::LambdaFull => lane.lambda_returns(cfg.gamma, cfg.lambda),
            };
            let adv = lane.gae(cfg.gamma, cfg.gae_lambda);
            for t in 0..span.len {
                let row = (span.start + t) * n + i;
                rewards[row] = r[t];
                critic[row] = y[t];
                if batch.controlled[row] {
                    advantages[row] = adv[t];
                }
            }
        }
        if cfg.variant.uses_efficiency_loss() {
            let team_values: Vec<f64> = (0..=span.len).map(|t| lanes.iter().map(|l| l[t]).sum()).collect();
            let lane = Lane::new(r_team, &team_values)?;
            team[span.start..span.start + span.len].copy_from_slice(&lane.ttd_all(&ret));
        }
    }
    if cfg.adv_std {
        let idx: Vec<usize> = (0..batch.n_rows()).filter(|&r| batch.controlled[r]).collect();
        if idx.len() > 1 {
            let mean = idx.iter().map(|&r| advantages[r]).sum::<f64>() / idx.len() as f64;
            let var = idx.iter().map(|&r| (advantages[r] - mean).powi(2)).sum::<f64>() / idx.len() as f64;
            let sd = var.sqrt() + 1e-8;
            for &r in &idx {
                advantages[r] = (advantages[r] - mean) / sd;
            }
        }
    }
    Ok(Targets {
        rewards,
        critic,
        advantages,
        team,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table(batch: &Batch, rng: &mut ChaCha8Rng) -> ValueTable {
        ValueTable {
            rows: (0..batch.n_rows()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            bootstrap: (0..batch.bootstrap_inputs.nrows()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    fn cfg(variant: Variant, m: usize) -> TargetConfig {
        TargetConfig {
            variant,
            gamma: 0.95,
            lambda: 0.8,
            m,
            gae_lambda: 0.9,
            alpha: 0.3,
            adv_std: false,
        }
    }

    #[test]
    fn zero_alpha_keeps_team_reward_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = Batch::random(&mut rng, 3, 4, 2, 6);
        let v = table(&batch, &mut rng);
        let sh = shaping_sums(&batch, &v, 0.95, ShapingScope::AllAgents);
        let mut c = cfg(Variant::ShapleyMachine, 7);
        c.alpha = 0.0;
        let t = compute_targets(&batch, &v, &batch.rewards, Some(&sh), &c).unwrap();
        for (row, r) in t.rewards.iter().enumerate() {
            assert_eq!(r.to_bits(), batch.rewards[row / 3].to_bits());
        }
    }

    #[test]
    fn poam_and_banzhaf_agree_when_truncation_is_inactive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = Batch::random(&mut rng, 3, 4, 2, 6);
        let v = table(&batch, &mut rng);
        let p = compute_targets(&batch, &v, &batch.rewards, None, &cfg(Variant::Poam, 1)).unwrap();
        let b = compute_targets(&batch, &v, &batch.rewards, None, &cfg(Variant::BanzhafMachine, 100)).unwrap();
        for (x, y) in p.critic.iter().zip(&b.critic) {
            assert!((x - y).abs() < 1e-10);
        }
        assert_eq!(p.advantages, b.advantages);
    }

    #[test]
    fn uncontrolled_rows_have_no_advantage() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = Batch::random(&mut rng, 4, 3, 2, 8);
        let v = table(&batch, &mut rng);
        let mut c = cfg(Variant::BanzhafMachine, 3);
        c.adv_std = true;
        let t = compute_targets(&batch, &v, &batch.rewards, None, &c).unwrap();
        for r in 0..batch.n_rows() {
            if !batch.controlled[r] {
                assert_eq!(t.advantages[r], 0.0);
            }
        }
    }

    #[test]
    fn shaping_scope_limits_the_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batch = Batch::random(&mut rng, 3, 2, 1, 5);
        let v = table(&batch, &mut rng);
        let ctl = shaping_sums(&batch, &v, 0.9, ShapingScope::ControlledOnly);
        let all = shaping_sums(&batch, &v, 0.9, ShapingScope::AllAgents);
        let n = 3;
        let mut boot = 0;
        for span in &batch.chunks {
            for t in 0..span.len {
                let s = span.start + t;
                let next = |j: usize| {
                    if t + 1 < span.len {
                        v.rows[(s + 1) * n + j]
                    } else if span.end == ChunkEnd::Terminated {
                        0.0
                    } else {
                        v.bootstrap[boot * n + j]
                    }
                };
                for i in 0..n {
                    let mut e_all = 0.0;
                    let mut e_ctl = 0.0;
                    for j in (0..n).filter(|&j| j != i) {
                        let d = v.rows[s * n + j] - 0.9 * next(j);
                        e_all += d;
                        if batch.controlled[s * n + j] {
                            e_ctl += d;
                        }
                    }
                    assert!((all[s * n + i] - e_all).abs() < 1e-12);
                    assert!((ctl[s * n + i] - e_ctl).abs() < 1e-12);
                }
            }
            if span.end != ChunkEnd::Terminated {
                boot += 1;
            }
        }
    }
}
