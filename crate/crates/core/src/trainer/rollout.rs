use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::batch::{Chunk, ChunkEnd};
use super::config::RunConfig;
use super::nets::{History, Networks};
use crate::envs::replay::ReplayLine;
use crate::envs::{Action, Env, N_ACTIONS};
use crate::error::Result;
use crate::nn::Categorical;
use crate::par;
use crate::teammates::{sample_team, TeamComposition, UncontrolledPolicy};

/// How controlled agents pick actions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    Sample,
    Greedy,
    /// Uniform over actions, ignoring the networks.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeStat {
    pub ret: f64,
    pub len: usize,
    pub terminated: bool,
}

/// One live episode: environment, team and per-agent histories.
#[derive(Clone, Debug)]
struct Episode {
    env: Env,
    team: TeamComposition,
    histories: Vec<History>,
    /// Raw masked observations of the current state.
    obs: Vec<Vec<f64>>,
    norm_obs: Vec<Vec<f64>>,
    ret: f64,
    len: usize,
}

impl Episode {
    fn start<R: Rng + ?Sized>(mut env: Env, nets: &Networks, pool: &[UncontrolledPolicy], rng: &mut R) -> Result<Self> {
        env.reset(rng)?;
        let n = env.n_agents();
        let team = sample_team(rng, n, pool)?;
        let mut ep = Self {
            env,
            team,
            histories: vec![History::new(nets.dims); n],
            obs: Vec::new(),
            norm_obs: Vec::new(),
            ret: 0.0,
            len: 0,
        };
        ep.observe(nets, None);
        Ok(ep)
    }

    fn observe(&mut self, nets: &Networks, actions: Option<&[Action]>) {
        let n = self.env.n_agents();
        self.obs = (0..n).map(|i| self.env.observe(i, false)).collect();
        self.norm_obs = self.obs.iter().map(|o| nets.normalize_obs(o)).collect();
        for (i, h) in self.histories.iter_mut().enumerate() {
            h.push(&self.norm_obs[i], actions.map(|a| a[i].index()));
        }
    }

    fn inputs(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.histories.len() * self.histories[0].input_dim());
        for (i, h) in self.histories.iter().enumerate() {
            h.write_input(i, &mut x);
        }
        x
    }

    /// Joint action and behaviour log-probabilities for the current state.
    #[allow(clippy::too_many_arguments)]
    fn act<R: Rng + ?Sized, Q: Rng + ?Sized>(
        &self,
        nets: &Networks,
        x: &[f64],
        pool: &[UncontrolledPolicy],
        full_observation: bool,
        mode: ActMode,
        env_rng: &mut R,
        act_rng: &mut Q,
    ) -> Result<(Vec<Action>, Vec<f64>)> {
        let n = self.env.n_agents();
        let d = x.len() / n;
        let mut actions = vec![Action::Stay; n];
        let mut logp = vec![0.0; n];
        let ctl = &self.team.controlled;
        if mode == ActMode::Random {
            for &i in ctl {
                actions[i] = Action::ALL[act_rng.gen_range(0..N_ACTIONS)];
            }
        } else if !ctl.is_empty() {
            let xc = Array2::from_shape_fn((ctl.len(), d), |(r, c)| x[ctl[r] * d + c]);
            let logits = nets.logits(xc.view())?;
            for (r, &i) in ctl.iter().enumerate() {
                let dist = Categorical::from_logits(logits.row(r).as_slice().expect("standard layout"))?;
                let a = match mode {
                    ActMode::Greedy => dist.greedy(),
                    _ => dist.sample(act_rng),
                };
                logp[i] = dist.log_prob(a)?;
                actions[i] = Action::ALL[a];
            }
        }
        for (&slot, &p) in &self.team.uncontrolled {
            let view = if full_observation {
                self.env.observe(slot, true)
            } else {
                self.obs[slot].clone()
            };
            actions[slot] = pool[p].act(&self.env, &view, env_rng);
        }
        Ok((actions, logp))
    }

    fn stat(&self, terminated: bool) -> EpisodeStat {
        EpisodeStat {
            ret: self.ret,
            len: self.len,
            terminated,
        }
    }
}

/// What one worker hands back per iteration.
#[derive(Clone, Debug, Default)]
pub struct Segment {
    pub chunks: Vec<Chunk>,
    /// Raw observations seen, row-major, for the normaliser.
    pub raw_obs: Vec<f64>,
    pub episodes: Vec<EpisodeStat>,
}

/// A rollout worker with its own environment and rng stream.
#[derive(Clone, Debug)]
pub struct Worker {
    template: Env,
    rng: ChaCha8Rng,
    act_rng: ChaCha8Rng,
    pool: Vec<UncontrolledPolicy>,
    full_observation: bool,
    episode: Option<Episode>,
}

impl Worker {
    pub fn new(cfg: &RunConfig, seed: u64, index: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2 * index as u64 + 2);
        let mut act_rng = ChaCha8Rng::seed_from_u64(seed);
        act_rng.set_stream(2 * index as u64 + 3);
        Ok(Self {
            template: cfg.env.build()?,
            rng,
            act_rng,
            pool: cfg.team.pool.clone(),
            full_observation: cfg.team.full_observation,
            episode: None,
        })
    }

    /// Runs `steps` joint steps with the sampling policy, carrying an
    /// unfinished episode over to the next call.
    pub fn collect(&mut self, nets: &Networks, steps: usize) -> Result<Segment> {
        let mut seg = Segment::default();
        let mut chunk: Option<Chunk> = None;
        for _ in 0..steps {
            let mut ep = match self.episode.take() {
                Some(ep) => ep,
                None => Episode::start(self.template.clone(), nets, &self.pool, &mut self.rng)?,
            };
            let n = ep.env.n_agents();
            let c = chunk.get_or_insert_with(|| Chunk {
                len: 0,
                inputs: Vec::new(),
                obs: Vec::new(),
                actions: Vec::new(),
                behavior_logp: Vec::new(),
                controlled: (0..n).map(|i| ep.team.is_controlled(i)).collect(),
                rewards: Vec::new(),
                end: ChunkEnd::Cut,
                bootstrap: None,
            });
            let x = ep.inputs();
            let (actions, logp) = ep.act(
                nets,
                &x,
                &self.pool,
                self.full_observation,
                ActMode::Sample,
                &mut self.rng,
                &mut self.act_rng,
            )?;
            let step = ep.env.step(&actions, &mut self.rng)?;
            c.len += 1;
            c.inputs.extend_from_slice(&x);
            for i in 0..n {
                c.obs.extend_from_slice(&ep.norm_obs[i]);
                seg.raw_obs.extend_from_slice(&ep.obs[i]);
            }
            c.actions.extend(actions.iter().map(|a| a.index()));
            c.behavior_logp.extend_from_slice(&logp);
            c.rewards.push(step.reward);
            ep.ret += step.reward;
            ep.len += 1;
            ep.observe(nets, Some(&actions));
            if step.done() {
                let mut done = chunk.take().expect("chunk open");
                done.end = if step.terminated {
                    ChunkEnd::Terminated
                } else {
                    done.bootstrap = Some(ep.inputs());
                    ChunkEnd::Truncated
                };
                seg.chunks.push(done);
                seg.episodes.push(ep.stat(step.terminated));
            } else {
                self.episode = Some(ep);
            }
        }
        if let Some(mut c) = chunk {
            let ep = self.episode.as_ref().expect("unfinished episode");
            c.bootstrap = Some(ep.inputs());
            seg.chunks.push(c);
        }
        Ok(seg)
    }
}

/// Summary of a batch of evaluation episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalStats {
    pub returns: Vec<f64>,
    pub terminated: Vec<bool>,
}

impl EvalStats {
    pub fn episodes(&self) -> usize {
        self.returns.len()
    }

    pub fn mean_return(&self) -> f64 {
        self.returns.iter().sum::<f64>() / self.returns.len().max(1) as f64
    }

    /// Half-width of a normal-approximation 95% interval on the mean.
    pub fn ci95(&self) -> f64 {
        let n = self.returns.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean_return();
        let var = self.returns.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        1.96 * (var / n as f64).sqrt()
    }

    /// Fraction of episodes that ended by termination (capture).
    pub fn success_rate(&self) -> f64 {
        self.terminated.iter().filter(|&&t| t).count() as f64 / self.terminated.len().max(1) as f64
    }
}

/// Runs `episodes` episodes over sampled team compositions. Episode `e`
/// draws its team, the environment noise and the teammates' choices from
/// stream `2e` of `seed`, and controlled sampling from stream `2e + 1`, so
/// different `mode`s face the same compositions and start states.
pub fn evaluate(nets: &Networks, cfg: &RunConfig, episodes: usize, seed: u64, mode: ActMode) -> Result<EvalStats> {
    let template = cfg.env.build()?;
    let pool = &cfg.team.pool;
    let full = cfg.team.full_observation;
    let results: Vec<Result<EpisodeStat>> = par::map_indexed(episodes, |e| {
        let mut env_rng = ChaCha8Rng::seed_from_u64(seed);
        env_rng.set_stream(2 * e as u64);
        let mut act_rng = ChaCha8Rng::seed_from_u64(seed);
        act_rng.set_stream(2 * e as u64 + 1);
        let mut ep = Episode::start(template.clone(), nets, pool, &mut env_rng)?;
        loop {
            let x = ep.inputs();
            let (actions, _) = ep.act(nets, &x, pool, full, mode, &mut env_rng, &mut act_rng)?;
            let step = ep.env.step(&actions, &mut env_rng)?;
            ep.ret += step.reward;
            ep.len += 1;
            if step.done() {
                return Ok(ep.stat(step.terminated));
            }
            ep.observe(nets, Some(&actions));
        }
    });
    let mut out = EvalStats {
        returns: Vec::with_capacity(episodes),
        terminated: Vec::with_capacity(episodes),
    };
    for r in results {
        let s = r?;
        out.returns.push(s.ret);
        out.terminated.push(s.terminated);
    }
    Ok(out)
}

/// A replay of evaluation episode `episode` of `seed`: the team, the initial
/// snapshot, and one line per step.
pub fn record_episode(
    nets: &Networks,
    cfg: &RunConfig,
    seed: u64,
    episode: usize,
    mode: ActMode,
) -> Result<(TeamComposition, String, Vec<ReplayLine>)> {
    let mut env_rng = ChaCha8Rng::seed_from_u64(seed);
    env_rng.set_stream(2 * episode as u64);
    let mut act_rng = ChaCha8Rng::seed_from_u64(seed);
    act_rng.set_stream(2 * episode as u64 + 1);
    let pool = &cfg.team.pool;
    let mut ep = Episode::start(cfg.env.build()?, nets, pool, &mut env_rng)?;
    let start = ep.env.snapshot();
    let mut lines = Vec::new();
    loop {
        let x = ep.inputs();
        let (actions, _) = ep.act(nets, &x, pool, cfg.team.full_observation, mode, &mut env_rng, &mut act_rng)?;
        let step = ep.env.step(&actions, &mut env_rng)?;
        lines.push(ReplayLine {
            snapshot: ep.env.snapshot(),
            actions: actions.iter().map(|a| a.index()).collect(),
            reward: step.reward,
            done: step.done(),
        });
        if step.done() {
            return Ok((ep.team, start, lines));
        }
        ep.observe(nets, Some(&actions));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvConfig;
    use crate::trainer::batch::Batch;

    fn small_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.algo.hidden = 16;
        cfg
    }

    #[test]
    fn segments_form_a_valid_batch() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let nets = Networks::new(&cfg, 23, &mut rng).unwrap();
        let mut w = Worker::new(&cfg, 7, 0).unwrap();
        let mut total = 0;
        for _ in 0..5 {
            let seg = w.collect(&nets, 64).unwrap();
            let steps: usize = seg.chunks.iter().map(|c| c.len).sum();
            assert_eq!(steps, 64);
            assert_eq!(seg.raw_obs.len(), 64 * 3 * 23);
            let b = Batch::from_chunks(&seg.chunks, 3, nets.dims.in_dim(), 23).unwrap();
            for (r, &c) in b.controlled.iter().enumerate() {
                if !c {
                    assert_eq!(b.behavior_logp[r], 0.0);
                } else {
                    assert!(b.behavior_logp[r] < 0.0);
                }
            }
            for c in &seg.chunks[..seg.chunks.len() - 1] {
                assert_ne!(c.end, ChunkEnd::Cut);
            }
            total += seg.episodes.len();
        }
        assert!(total > 0);
    }

    #[test]
    fn collection_is_seed_deterministic() {
        let cfg = small_cfg();
        let nets = Networks::new(&cfg, 23, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let run = || {
            let mut w = Worker::new(&cfg, 3, 2).unwrap();
            (0..3).map(|_| w.collect(&nets, 40).unwrap().chunks).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn modes_share_compositions() {
        let mut cfg = small_cfg();
        cfg.env = EnvConfig::Diagnostic { n_agents: 2 };
        let nets = Networks::new(&cfg, 1, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let a = evaluate(&nets, &cfg, 50, 9, ActMode::Greedy).unwrap();
        let b = evaluate(&nets, &cfg, 50, 9, ActMode::Greedy).unwrap();
        assert_eq!(a, b);
        assert!(a.terminated.iter().all(|&t| t));
        assert!(a.ci95() >= 0.0);
    }

    #[test]
    fn recorded_episode_matches_evaluation() {
        let cfg = small_cfg();
        let nets = Networks::new(&cfg, 23, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let stats = evaluate(&nets, &cfg, 3, 11, ActMode::Greedy).unwrap();
        for e in 0..3 {
            let (_, _, lines) = record_episode(&nets, &cfg, 11, e, ActMode::Greedy).unwrap();
            assert!(lines.last().unwrap().done);
            let ret: f64 = lines.iter().map(|l| l.reward).sum();
            assert_eq!(ret, stats.returns[e]);
        }
    }
}
