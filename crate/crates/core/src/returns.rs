//! Return targets: n-step returns, truncated TD(λ) mixtures, finite-horizon
//! λ-returns, GAE, and the mapping from coalitions to n-step horizons.
//!
//! All targets are computed on a [`Lane`]: a reward sequence `R_0..R_{T-1}`
//! paired with `T + 1` value estimates, the last of which is the bootstrap
//! (zero when the episode terminated).

use crate::coopgame::CoalitionId;
use crate::error::{Error, Result};
use crate::tolerance;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReturnConfig {
    pub gamma: f64,
    pub lambda: f64,
    /// Number of n-step components mixed by the truncated target.
    pub m: usize,
}

impl ReturnConfig {
    pub fn new(gamma: f64, lambda: f64, m: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::invalid(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid(format!("lambda must lie in [0, 1], got {lambda}")));
        }
        if m == 0 {
            return Err(Error::invalid("truncation horizon m must be at least 1"));
        }
        Ok(Self { gamma, lambda, m })
    }
}

/// Which reward sequence a per-agent target is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardSource {
    /// The common team reward `R_t`.
    Team,
    /// The agent's shaped reward `R_{t,i}`.
    Shaped,
}

/// Rewards and values for one agent (or the whole team) over an episode.
#[derive(Clone, Copy, Debug)]
pub struct Lane<'a> {
    pub rewards: &'a [f64],
    /// `T + 1` entries; the last is the bootstrap.
    pub values: &'a [f64],
}

impl<'a> Lane<'a> {
    pub fn new(rewards: &'a [f64], values: &'a [f64]) -> Result<Self> {
        if values.len() != rewards.len() + 1 {
            return Err(Error::DimensionMismatch {
                what: "lane values (T + 1)",
                expected: rewards.len() + 1,
                got: values.len(),
            });
        }
        Ok(Self { rewards, values })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t >= self.len() {
            return Err(Error::OutOfRange {
                what: "timestep",
                index: t,
                len: self.len(),
            });
        }
        Ok(())
    }

    /// `G_{t:t+n}`. Horizons running past the end of the episode stop at `T`
    /// and bootstrap from the final value slot.
    pub fn nstep(&self, t: usize, n: usize, gamma: f64) -> Result<f64> {
        self.check_t(t)?;
        if n == 0 {
            return Err(Error::invalid("n-step horizon must be at least 1"));
        }
        Ok(self.nstep_unchecked(t, n, gamma))
    }

    fn nstep_unchecked(&self, t: usize, n: usize, gamma: f64) -> f64 {
        let steps = n.min(self.len() - t);
        let mut discount = 1.0;
        let mut total = 0.0;
        for r in &self.rewards[t..t + steps] {
            total += discount * r;
            discount *= gamma;
        }
        total + discount * self.values[t + steps]
    }

    /// Truncated λ-return at `t` mixing `min(m, T - t)` n-step components.
    pub fn ttd(&self, t: usize, cfg: &ReturnConfig) -> Result<f64> {
        self.check_t(t)?;
        let m_eff = cfg.m.min(self.len() - t);
        Ok(truncated_weights(cfg.lambda, m_eff)
            .iter()
            .enumerate()
            .map(|(k, w)| w * self.nstep_unchecked(t, k + 1, cfg.gamma))
            .sum())
    }

    /// Truncated targets for every timestep.
    pub fn ttd_all(&self, cfg: &ReturnConfig) -> Vec<f64> {
        (0..self.len())
            .map(|t| self.ttd(t, cfg).expect("t in range"))
            .collect()
    }

    /// Finite-horizon λ-returns for every timestep by the backward recursion
    /// `G_t = R_t + γ((1 - λ) V_{t+1} + λ G_{t+1})`, seeded with `G_T = V_T`.
    pub fn lambda_returns(&self, gamma: f64, lambda: f64) -> Vec<f64> {
        let t_len = self.len();
        let mut out = vec![0.0; t_len];
        let mut next = self.values[t_len];
        for t in (0..t_len).rev() {
            let blend = if t + 1 == t_len {
                self.values[t_len]
            } else {
                (1.0 - lambda) * self.values[t + 1] + lambda * next
            };
            out[t] = self.rewards[t] + gamma * blend;
            next = out[t];
        }
        out
    }

    /// One-step TD errors `δ_t = R_t + γ V_{t+1} - V_t`.
    pub fn td_errors(&self, gamma: f64) -> Vec<f64> {
        (0..self.len())
            .map(|t| self.rewards[t] + gamma * self.values[t + 1] - self.values[t])
            .collect()
    }

    /// `A_t = sum_l (γλ)^l δ_{t+l}` by backward recursion.
    pub fn gae(&self, gamma: f64, lambda: f64) -> Vec<f64> {
        let deltas = self.td_errors(gamma);
        let mut out = vec![0.0; deltas.len()];
        let mut acc = 0.0;
        for t in (0..deltas.len()).rev() {
            acc = deltas[t] + gamma * lambda * acc;
            out[t] = acc;
        }
        out
    }
}

/// Weights `(1-λ)λ^{n-1}` for `n < m` and the tail mass `λ^{m-1}` on `n = m`.
fn truncated_weights(lambda: f64, m: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(m);
    let mut power = 1.0;
    for _ in 1..m {
        w.push((1.0 - lambda) * power);
        power *= lambda;
    }
    w.push(power);
    w
}

/// Mixture weights of the truncated λ-return over `m` components.
pub fn ttd_weights(cfg: &ReturnConfig) -> Result<Vec<f64>> {
    if !(cfg.lambda > 0.0 && cfg.lambda < 1.0) {
        return Err(Error::invalid(format!(
            "lambda must lie in (0, 1), got {}",
            cfg.lambda
        )));
    }
    if cfg.m == 0 {
        return Err(Error::invalid("truncation horizon m must be at least 1"));
    }
    Ok(truncated_weights(cfg.lambda, cfg.m))
}

/// One episode of rewards, value estimates and termination flags.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    rewards: Vec<f64>,
    per_agent_rewards: Option<Vec<Vec<f64>>>,
    values: Vec<Vec<f64>>,
    team_values: Vec<f64>,
    dones: Vec<bool>,
}

impl Trajectory {
    /// `values[i]` holds agent `i`'s `T + 1` estimates. When the last step is
    /// terminal the bootstrap slot must be zero.
    pub fn new(rewards: Vec<f64>, values: Vec<Vec<f64>>, dones: Vec<bool>) -> Result<Self> {
        let t_len = rewards.len();
        if t_len == 0 {
            return Err(Error::invalid("a trajectory needs at least one step"));
        }
        if values.is_empty() {
            return Err(Error::invalid("a trajectory needs at least one agent"));
        }
        if dones.len() != t_len {
            return Err(Error::DimensionMismatch {
                what: "done flags",
                expected: t_len,
                got: dones.len(),
            });
        }
        for row in &values {
            if row.len() != t_len + 1 {
                return Err(Error::DimensionMismatch {
                    what: "value row (T + 1)",
                    expected: t_len + 1,
                    got: row.len(),
                });
            }
        }
        if dones[t_len - 1] && values.iter().any(|row| row[t_len] != 0.0) {
            return Err(Error::invalid(
                "terminal trajectories must bootstrap from 0",
            ));
        }
        let team_values = (0..=t_len)
            .map(|t| values.iter().map(|row| row[t]).sum())
            .collect();
        Ok(Self {
            rewards,
            per_agent_rewards: None,
            values,
            team_values,
            dones,
        })
    }

    /// Attaches shaped per-agent rewards (agents × T).
    pub fn with_shaped_rewards(mut self, shaped: Vec<Vec<f64>>) -> Result<Self> {
        if shaped.len() != self.n_agents() {
            return Err(Error::DimensionMismatch {
                what: "shaped reward rows",
                expected: self.n_agents(),
                got: shaped.len(),
            });
        }
        if let Some(row) = shaped.iter().find(|r| r.len() != self.len()) {
            return Err(Error::DimensionMismatch {
                what: "shaped reward row",
                expected: self.len(),
                got: row.len(),
            });
        }
        self.per_agent_rewards = Some(shaped);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.values.len()
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn values(&self, agent: usize) -> &[f64] {
        &self.values[agent]
    }

    pub fn team_values(&self) -> &[f64] {
        &self.team_values
    }

    pub fn dones(&self) -> &[bool] {
        &self.dones
    }

    pub fn shaped_rewards(&self, agent: usize) -> Option<&[f64]> {
        self.per_agent_rewards.as_ref().map(|r| r[agent].as_slice())
    }

    pub fn lane(&self, agent: usize, source: RewardSource) -> Result<Lane<'_>> {
        if agent >= self.n_agents() {
            return Err(Error::OutOfRange {
                what: "agent",
                index: agent,
                len: self.n_agents(),
            });
        }
        let rewards = match source {
            RewardSource::Team => &self.rewards,
            RewardSource::Shaped => self
                .per_agent_rewards
                .as_ref()
                .map(|r| &r[agent])
                .ok_or_else(|| Error::invalid("trajectory carries no shaped rewards"))?,
        };
        Lane::new(rewards, &self.values[agent])
    }

    /// Team rewards bootstrapped from the summed per-agent values `V(Ñ, s)`.
    pub fn team_lane(&self) -> Lane<'_> {
        Lane {
            rewards: &self.rewards,
            values: &self.team_values,
        }
    }
}

pub fn nstep_return(
    traj: &Trajectory,
    agent: usize,
    t: usize,
    n: usize,
    cfg: &ReturnConfig,
    source: RewardSource,
) -> Result<f64> {
    traj.lane(agent, source)?.nstep(t, n, cfg.gamma)
}

pub fn ttd_target(
    traj: &Trajectory,
    agent: usize,
    t: usize,
    cfg: &ReturnConfig,
    source: RewardSource,
) -> Result<f64> {
    traj.lane(agent, source)?.ttd(t, cfg)
}

/// The finite-horizon λ-return at `t` (all `T - t` components).
pub fn lambda_return_finite(
    traj: &Trajectory,
    agent: usize,
    t: usize,
    cfg: &ReturnConfig,
    source: RewardSource,
) -> Result<f64> {
    let lane = traj.lane(agent, source)?;
    lane.check_t(t)?;
    Ok(lane.lambda_returns(cfg.gamma, cfg.lambda)[t])
}

pub fn gae(
    traj: &Trajectory,
    agent: usize,
    cfg: &ReturnConfig,
    source: RewardSource,
) -> Result<Vec<f64>> {
    Ok(traj.lane(agent, source)?.gae(cfg.gamma, cfg.lambda))
}

/// TD error of the truncated target: `target - V_i(s_t)`.
pub fn ttd_error(
    traj: &Trajectory,
    agent: usize,
    t: usize,
    cfg: &ReturnConfig,
    source: RewardSource,
) -> Result<f64> {
    Ok(ttd_target(traj, agent, t, cfg, source)? - traj.values(agent)[t])
}

/// One coalition's slot in the size-ordered correspondence with n-step returns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoalitionReturn {
    pub coalition: CoalitionId,
    /// Horizon `n(i)` of the associated return.
    pub horizon: usize,
    /// `q(i)`: how many coalitions share this size.
    pub block_size: usize,
}

/// Non-empty coalitions sorted by size, each mapped to the n-step return
/// shared by its size class.
#[derive(Clone, Debug, PartialEq)]
pub struct CoalitionReturnMap {
    pub n_agents: usize,
    pub entries: Vec<CoalitionReturn>,
}

impl CoalitionReturnMap {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn distinct_horizons(&self) -> usize {
        let mut h: Vec<usize> = self.entries.iter().map(|e| e.horizon).collect();
        h.dedup();
        h.len()
    }
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Coalitions of size `s` map to horizon `min(s, m)`; ties inside a size
/// class are ordered by bitmask.
pub fn coalition_return_map(n_agents: usize, m: usize) -> Result<CoalitionReturnMap> {
    if n_agents == 0 || n_agents > crate::coopgame::MAX_EXACT_AGENTS {
        return Err(Error::invalid(format!(
            "n_agents must be in 1..={}, got {n_agents}",
            crate::coopgame::MAX_EXACT_AGENTS
        )));
    }
    if m == 0 {
        return Err(Error::invalid("truncation horizon m must be at least 1"));
    }
    let mut coalitions: Vec<CoalitionId> = (1..1u32 << n_agents)
        .map(|b| CoalitionId::new(b, n_agents).expect("mask in range"))
        .collect();
    coalitions.sort_by_key(|c| (c.len(), c.bits()));
    let entries = coalitions
        .into_iter()
        .map(|c| CoalitionReturn {
            coalition: c,
            horizon: c.len().min(m),
            block_size: binomial(n_agents, c.len()),
        })
        .collect();
    Ok(CoalitionReturnMap { n_agents, entries })
}

/// `V(C_i, s_t) = G_{t:t+n(i)} / q(i)` on the team lane.
pub fn coalition_value_from_nstep(
    traj: &Trajectory,
    map: &CoalitionReturnMap,
    i: usize,
    t: usize,
    cfg: &ReturnConfig,
) -> Result<f64> {
    let entry = map.entries.get(i).ok_or(Error::OutOfRange {
        what: "coalition entry",
        index: i,
        len: map.len(),
    })?;
    Ok(traj.team_lane().nstep(t, entry.horizon, cfg.gamma)? / entry.block_size as f64)
}

/// Checks the stored team values against the per-agent sums.
pub fn team_values_consistent(traj: &Trajectory) -> bool {
    (0..=traj.len()).all(|t| {
        let sum: f64 = (0..traj.n_agents()).map(|i| traj.values(i)[t]).sum();
        (sum - traj.team_values()[t]).abs() < tolerance::ORACLE
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_agent(rewards: Vec<f64>, values: Vec<f64>, terminal: bool) -> Trajectory {
        let t = rewards.len();
        let mut dones = vec![false; t];
        dones[t - 1] = terminal;
        Trajectory::new(rewards, vec![values], dones).unwrap()
    }

    #[test]
    fn one_step_return() {
        let traj = one_agent(vec![2.0, 0.0], vec![0.0, 3.0, 0.0], true);
        let cfg = ReturnConfig::new(1.0, 0.5, 1).unwrap();
        assert_eq!(nstep_return(&traj, 0, 0, 1, &cfg, RewardSource::Team).unwrap(), 5.0);
    }

    #[test]
    fn myopic_limit() {
        let traj = one_agent(vec![1.5, 2.0, 3.0], vec![4.0, 5.0, 6.0, 0.0], true);
        let cfg = ReturnConfig::new(0.0, 0.5, 3).unwrap();
        for n in 1..=3 {
            assert_eq!(nstep_return(&traj, 0, 0, n, &cfg, RewardSource::Team).unwrap(), 1.5);
        }
    }

    #[test]
    fn three_step_hand_sum() {
        let traj = one_agent(vec![1.0, 1.0, 1.0, 0.0], vec![0.0, 0.0, 0.0, 10.0, 0.0], true);
        let cfg = ReturnConfig::new(0.9, 0.5, 3).unwrap();
        let g = nstep_return(&traj, 0, 0, 3, &cfg, RewardSource::Team).unwrap();
        // 1 + 0.9 + 0.81 + 0.729 * 10
        assert!((g - 10.0).abs() < 1e-12);
    }

    #[test]
    fn nstep_rejects_bad_time() {
        let traj = one_agent(vec![1.0], vec![0.0, 0.0], true);
        let cfg = ReturnConfig::new(0.9, 0.5, 3).unwrap();
        assert!(matches!(
            nstep_return(&traj, 0, 1, 1, &cfg, RewardSource::Team),
            Err(Error::OutOfRange { .. })
        ));
        assert!(nstep_return(&traj, 0, 0, 1, &cfg, RewardSource::Shaped).is_err());
    }

    #[test]
    fn weights_half_three() {
        let w = ttd_weights(&ReturnConfig::new(0.9, 0.5, 3).unwrap()).unwrap();
        assert_eq!(w, vec![0.5, 0.25, 0.25]);
    }

    #[test]
    fn weights_near_zero_lambda() {
        let w = ttd_weights(&ReturnConfig::new(0.9, 1e-9, 5).unwrap()).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-8);
        assert!(w[1..].iter().all(|&x| x < 1e-8));
    }

    #[test]
    fn weights_reject_bad_lambda() {
        for lambda in [0.0, 1.0] {
            let cfg = ReturnConfig::new(0.9, lambda, 3).unwrap();
            assert!(ttd_weights(&cfg).is_err());
        }
        assert!(ReturnConfig::new(0.9, 0.5, 0).is_err());
        assert!(ReturnConfig::new(1.1, 0.5, 1).is_err());
    }

    #[test]
    fn m_one_is_one_step() {
        let traj = one_agent(vec![1.0, 2.0, 3.0], vec![0.5, 0.25, 0.125, 0.0], true);
        let cfg = ReturnConfig::new(0.9, 0.7, 1).unwrap();
        for t in 0..3 {
            assert_eq!(
                ttd_target(&traj, 0, t, &cfg, RewardSource::Team).unwrap(),
                nstep_return(&traj, 0, t, 1, &cfg, RewardSource::Team).unwrap()
            );
        }
    }

    #[test]
    fn monte_carlo_limit() {
        let traj = one_agent(vec![1.0, 2.0, 3.0], vec![9.0, 9.0, 9.0, 0.0], true);
        let cfg = ReturnConfig::new(0.5, 1.0, 1).unwrap();
        let g = lambda_return_finite(&traj, 0, 0, &cfg, RewardSource::Team).unwrap();
        assert!((g - (1.0 + 0.5 * 2.0 + 0.25 * 3.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_lambda_is_one_step() {
        let traj = one_agent(vec![1.0, 2.0, 3.0], vec![9.0, 7.0, 5.0, 0.0], true);
        let cfg = ReturnConfig::new(0.5, 0.0, 1).unwrap();
        let g = lambda_return_finite(&traj, 0, 0, &cfg, RewardSource::Team).unwrap();
        assert_eq!(g, 1.0 + 0.5 * 7.0);
    }

    #[test]
    fn gae_limits() {
        let traj = one_agent(vec![1.0, 2.0, 3.0], vec![0.3, 0.2, 0.1, 0.0], true);
        let lam0 = traj.lane(0, RewardSource::Team).unwrap().gae(0.9, 0.0);
        assert_eq!(lam0, traj.lane(0, RewardSource::Team).unwrap().td_errors(0.9));

        let plain = one_agent(vec![1.0, 2.0, 3.0], vec![0.0; 4], true);
        let a = plain.lane(0, RewardSource::Team).unwrap().gae(1.0, 1.0);
        assert_eq!(a, vec![6.0, 5.0, 3.0]);
    }

    #[test]
    fn terminal_bootstrap_must_be_zero() {
        assert!(Trajectory::new(vec![1.0], vec![vec![0.0, 1.0]], vec![true]).is_err());
        assert!(Trajectory::new(vec![1.0], vec![vec![0.0, 1.0]], vec![false]).is_ok());
    }

    #[test]
    fn three_agent_map() {
        let map = coalition_return_map(3, 7).unwrap();
        let sizes: Vec<usize> = map.entries.iter().map(|e| e.coalition.len()).collect();
        let q: Vec<usize> = map.entries.iter().map(|e| e.block_size).collect();
        let n: Vec<usize> = map.entries.iter().map(|e| e.horizon).collect();
        assert_eq!(sizes, vec![1, 1, 1, 2, 2, 2, 3]);
        assert_eq!(q, vec![3, 3, 3, 3, 3, 3, 1]);
        assert_eq!(n, vec![1, 1, 1, 2, 2, 2, 3]);
        assert_eq!(map.distinct_horizons(), 3);
    }

    #[test]
    fn single_agent_map() {
        let map = coalition_return_map(1, 1).unwrap();
        assert_eq!(map.len(), 1);
        assert_eq!((map.entries[0].horizon, map.entries[0].block_size), (1, 1));
    }

    #[test]
    fn coalition_values_from_team_lane() {
        let traj = Trajectory::new(
            vec![1.0, 0.5, 0.25, 0.0],
            vec![
                vec![0.1, 0.2, 0.3, 0.4, 0.5],
                vec![0.0, 0.1, 0.0, 0.1, 0.2],
                vec![0.3, 0.3, 0.3, 0.3, 0.3],
            ],
            vec![false; 4],
        )
        .unwrap();
        assert!(team_values_consistent(&traj));
        let cfg = ReturnConfig::new(0.9, 0.85, 7).unwrap();
        let map = coalition_return_map(3, 7).unwrap();
        let g1 = traj.team_lane().nstep(0, 1, 0.9).unwrap();
        let g3 = traj.team_lane().nstep(0, 3, 0.9).unwrap();
        assert!((coalition_value_from_nstep(&traj, &map, 0, 0, &cfg).unwrap() - g1 / 3.0).abs() < 1e-15);
        assert!((coalition_value_from_nstep(&traj, &map, 6, 0, &cfg).unwrap() - g3).abs() < 1e-15);
    }
}
