//! On-policy training of the Shapley Machine and its two baselines under
//! per-episode team sampling.

pub mod batch;
pub mod config;
pub mod losses;
pub mod nets;
pub mod rollout;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use batch::{compute_targets, shaping_sums, Batch, Chunk, ChunkEnd, TargetConfig, Targets, ValueTable};
pub use config::{
    default_m, AlgoConfig, LoggingConfig, LossWeights, OptimConfig, RunConfig, ShapingScope, TeamConfig, Variant,
};
pub use losses::{agent_model_loss, rl_loss, LossBreakdown};
pub use nets::{Dims, History, Networks};
pub use rollout::{evaluate, record_episode, ActMode, EvalStats, Worker};

use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, AdamState, RunningMeanStd};
use crate::par;

pub const REVISION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// Offset between the training seed and the evaluation seed.
const EVAL_SEED_OFFSET: u64 = 0x5EED_0000;

pub fn eval_seed(seed: u64) -> u64 {
    seed.wrapping_add(EVAL_SEED_OFFSET)
}

/// One row of the metrics CSV. Test columns are empty on iterations
/// without an evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub variant: Variant,
    pub m: usize,
    pub iteration: usize,
    pub env_steps: usize,
    pub episodes: usize,
    pub train_return: Option<f64>,
    pub test_return: Option<f64>,
    pub test_return_ci: Option<f64>,
    pub test_capture_rate: Option<f64>,
    pub policy_loss: f64,
    pub critic_loss: f64,
    pub efficiency_loss: f64,
    pub agent_model_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub mean_shaped_reward: f64,
    pub alpha: f64,
    pub skipped_batches: usize,
}

/// Metadata written next to every checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config_hash: String,
    pub seed: u64,
    pub revision: String,
    pub variant: Variant,
    pub env_steps: usize,
}

struct Optimizers {
    actor: AdamState,
    critic: AdamState,
    encoder: AdamState,
    obs_decoder: AdamState,
    act_decoder: AdamState,
}

impl Optimizers {
    fn new(cfg: &RunConfig, nets: &Networks) -> Result<Self> {
        let rl = cfg.optim.adam(cfg.optim.lr);
        let ed = cfg.optim.adam(cfg.optim.ed_lr);
        Ok(Self {
            actor: AdamState::new(rl, nets.actor.blocks())?,
            critic: AdamState::new(rl, nets.critic.blocks())?,
            encoder: AdamState::new(ed, nets.encoder.blocks())?,
            obs_decoder: AdamState::new(ed, nets.obs_decoder.blocks())?,
            act_decoder: AdamState::new(ed, nets.act_decoder.blocks())?,
        })
    }
}

pub struct Trainer {
    cfg: RunConfig,
    seed: u64,
    nets: Networks,
    optim: Optimizers,
    workers: Vec<Worker>,
    rng: ChaCha8Rng,
    reward_stats: RunningMeanStd,
    shaping_stats: RunningMeanStd,
    env_steps: usize,
    episodes: usize,
    iteration: usize,
    skipped: usize,
    next_eval: usize,
    last_train_return: Option<f64>,
    last_eval: Option<EvalStats>,
}

impl Trainer {
    pub fn new(cfg: RunConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let obs_dim = cfg.env.build()?.obs_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nets = Networks::new(&cfg, obs_dim, &mut rng)?;
        let optim = Optimizers::new(&cfg, &nets)?;
        let workers = (0..cfg.optim.num_parallel_envs)
            .map(|i| Worker::new(&cfg, seed, i))
            .collect::<Result<Vec<_>>>()?;
        let next_eval = cfg.logging.eval_interval;
        Ok(Self {
            cfg,
            seed,
            nets,
            optim,
            workers,
            rng,
            reward_stats: RunningMeanStd::new(1),
            shaping_stats: RunningMeanStd::new(1),
            env_steps: 0,
            episodes: 0,
            iteration: 0,
            skipped: 0,
            next_eval,
            last_train_return: None,
            last_eval: None,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn networks(&self) -> &Networks {
        &self.nets
    }

    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    pub fn is_finished(&self) -> bool {
        self.env_steps >= self.cfg.optim.total_steps
    }

    /// The most recent periodic or final evaluation.
    pub fn last_eval(&self) -> Option<&EvalStats> {
        self.last_eval.as_ref()
    }

    pub fn skipped_batches(&self) -> usize {
        self.skipped
    }

    fn alpha(&self) -> f64 {
        let a = self.cfg.losses.alpha;
        match self.cfg.algo.alpha_warmup_steps {
            0 => a,
            w => a * (self.env_steps as f64 / w as f64).min(1.0),
        }
    }

    /// Greedy evaluation on the run's fixed evaluation seed.
    pub fn evaluate(&self, episodes: usize, mode: ActMode) -> Result<EvalStats> {
        evaluate(&self.nets, &self.cfg, episodes, eval_seed(self.seed), mode)
    }

    /// Collect one buffer, update, and evaluate if an evaluation is due.
    pub fn iterate(&mut self) -> Result<MetricsRow> {
        let per_worker = self.cfg.optim.buffer_size / self.cfg.optim.num_parallel_envs;
        let nets = &self.nets;
        let segments = par::map_mut(&mut self.workers, |_, w| w.collect(nets, per_worker))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let dims = self.nets.dims;
        let chunks: Vec<Chunk> = segments.iter().flat_map(|s| s.chunks.iter().cloned()).collect();
        let batch = Batch::from_chunks(&chunks, dims.n_agents, dims.in_dim(), dims.obs_dim)?;
        let finished: Vec<f64> = segments.iter().flat_map(|s| s.episodes.iter().map(|e| e.ret)).collect();
        if !finished.is_empty() {
            self.last_train_return = Some(finished.iter().sum::<f64>() / finished.len() as f64);
        }
        self.episodes += finished.len();
        self.env_steps += batch.n_steps();
        if self.nets.use_obs_norm {
            for s in &segments {
                self.nets.obs_norm.update(s.raw_obs.chunks(dims.obs_dim));
            }
        }

        let alpha = self.alpha();
        let targets = self.targets(&batch, alpha)?;
        let mean_shaped_reward = targets.rewards.iter().sum::<f64>() / targets.rewards.len() as f64;
        let mut sums = [0.0; 5];
        let mut count = 0usize;
        let steps: Vec<usize> = (0..batch.n_steps()).collect();
        let o = self.cfg.optim.clone();
        for _ in 0..o.epochs {
            for mb in self.minibatches(&steps, o.minibatches) {
                if let Some(l) = self.rl_update(&batch, &targets, &mb)? {
                    for (s, v) in sums.iter_mut().zip([l.policy, l.critic, l.efficiency, l.entropy, l.clip_fraction]) {
                        *s += v;
                    }
                    count += 1;
                }
            }
        }
        let mut model_loss = 0.0;
        let mut model_count = 0usize;
        for _ in 0..o.ed_epochs {
            for mb in self.minibatches(&steps, o.ed_minibatches) {
                if let Some(l) = self.model_update(&batch, &mb)? {
                    model_loss += l;
                    model_count += 1;
                }
            }
        }
        let avg = |x: f64, c: usize| if c == 0 { f64::NAN } else { x / c as f64 };
        self.iteration += 1;
        let mut row = MetricsRow {
            variant: self.cfg.algo.variant,
            m: self.cfg.horizon_m(),
            iteration: self.iteration,
            env_steps: self.env_steps,
            episodes: self.episodes,
            train_return: self.last_train_return,
            test_return: None,
            test_return_ci: None,
            test_capture_rate: None,
            policy_loss: avg(sums[0], count),
            critic_loss: avg(sums[1], count),
            efficiency_loss: avg(sums[2], count),
            agent_model_loss: avg(model_loss, model_count),
            entropy: avg(sums[3], count),
            clip_fraction: avg(sums[4], count),
            mean_shaped_reward,
            alpha,
            skipped_batches: self.skipped,
        };
        let log = &self.cfg.logging;
        let due = log.eval_interval > 0 && self.env_steps >= self.next_eval;
        if due || self.is_finished() {
            let episodes = if self.is_finished() {
                log.final_eval_episodes
            } else {
                log.eval_episodes
            };
            while self.next_eval <= self.env_steps && log.eval_interval > 0 {
                self.next_eval += log.eval_interval;
            }
            let stats = self.evaluate(episodes, ActMode::Greedy)?;
            row.test_return = Some(stats.mean_return());
            row.test_return_ci = Some(stats.ci95());
            row.test_capture_rate = Some(stats.success_rate());
            self.last_eval = Some(stats);
        }
        Ok(row)
    }

    /// Values with the current parameters, reward standardisation, shaping
    /// and the per-variant targets.
    fn targets(&mut self, batch: &Batch, alpha: f64) -> Result<Targets> {
        let values = ValueTable {
            rows: self.nets.values(batch.inputs.view())?,
            bootstrap: if batch.bootstrap_inputs.nrows() == 0 {
                Vec::new()
            } else {
                self.nets.values(batch.bootstrap_inputs.view())?
            },
        };
        let a = &self.cfg.algo;
        let rewards: Vec<f64> = if a.standardise_rewards {
            self.reward_stats.update(batch.rewards.iter().map(std::slice::from_ref));
            batch.rewards.iter().map(|r| self.reward_stats.normalize(&[*r])[0]).collect()
        } else {
            batch.rewards.clone()
        };
        let shaping = if a.variant.uses_shaped_reward() {
            let mut s = shaping_sums(batch, &values, a.gamma, a.shaping_scope);
            if a.standardise_rewards {
                self.shaping_stats.update(s.iter().map(std::slice::from_ref));
                let rms = (self.shaping_stats.var[0] + self.shaping_stats.mean[0].powi(2)).sqrt() + 1e-8;
                s.iter_mut().for_each(|x| *x /= rms);
            }
            Some(s)
        } else {
            None
        };
        let tc = TargetConfig {
            variant: a.variant,
            gamma: a.gamma,
            lambda: a.lambda,
            m: self.cfg.horizon_m(),
            gae_lambda: a.gae_lambda,
            alpha,
            adv_std: a.use_adv_std,
        };
        compute_targets(batch, &values, &rewards, shaping.as_deref(), &tc)
    }

    fn minibatches(&mut self, steps: &[usize], k: usize) -> Vec<Vec<usize>> {
        let mut order = steps.to_vec();
        if k > 1 {
            order.shuffle(&mut self.rng);
        }
        let size = order.len().div_ceil(k);
        order.chunks(size.max(1)).map(<[usize]>::to_vec).collect()
    }

    fn rl_update(&mut self, batch: &Batch, targets: &Targets, steps: &[usize]) -> Result<Option<LossBreakdown>> {
        let nets = &mut self.nets;
        nets.actor.zero_grads();
        nets.critic.zero_grads();
        let l = rl_loss(nets, batch, targets, steps, self.cfg.algo.variant, &self.cfg.losses, true)?;
        if !l.is_finite() {
            self.skipped += 1;
            return Ok(None);
        }
        let cap = self.cfg.optim.max_grad_norm;
        if cap > 0.0 {
            clip_grad_norm(&mut [nets.actor.blocks_mut()], cap);
            clip_grad_norm(&mut [nets.critic.blocks_mut()], cap);
        }
        let a = self.optim.actor.step(nets.actor.blocks_mut());
        let c = self.optim.critic.step(nets.critic.blocks_mut());
        match (a, c) {
            (Ok(()), Ok(())) => Ok(Some(l)),
            (Err(Error::NonFinite(_)), _) | (_, Err(Error::NonFinite(_))) => {
                self.skipped += 1;
                Ok(None)
            }
            (Err(e), _) | (_, Err(e)) => Err(e),
        }
    }

    fn model_update(&mut self, batch: &Batch, steps: &[usize]) -> Result<Option<f64>> {
        let nets = &mut self.nets;
        nets.encoder.zero_grads();
        nets.obs_decoder.zero_grads();
        nets.act_decoder.zero_grads();
        let l = agent_model_loss(nets, batch, steps, true)?;
        if !l.is_finite() {
            self.skipped += 1;
            return Ok(None);
        }
        let cap = self.cfg.optim.max_grad_norm;
        if cap > 0.0 {
            clip_grad_norm(
                &mut [
                    nets.encoder.blocks_mut(),
                    nets.obs_decoder.blocks_mut(),
                    nets.act_decoder.blocks_mut(),
                ],
                cap,
            );
        }
        let results = [
            self.optim.encoder.step(nets.encoder.blocks_mut()),
            self.optim.obs_decoder.step(nets.obs_decoder.blocks_mut()),
            self.optim.act_decoder.step(nets.act_decoder.blocks_mut()),
        ];
        for r in results {
            match r {
                Ok(()) => {}
                Err(Error::NonFinite(_)) => {
                    self.skipped += 1;
                    return Ok(None);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(Some(l))
    }

    pub fn checkpoint_meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            config_hash: self.cfg.hash(),
            seed: self.seed,
            revision: REVISION.to_string(),
            variant: self.cfg.algo.variant,
            env_steps: self.env_steps,
        }
    }

    /// Writes `<stem>.bin` and `<stem>.json` into `dir`.
    pub fn save_checkpoint(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        let bin = dir.join(format!("{stem}.bin"));
        self.nets.save(&bin)?;
        let meta = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&self.checkpoint_meta()).expect("metadata serialises");
        std::fs::write(&meta, text).map_err(|e| Error::io(&meta, e))?;
        Ok(bin)
    }
}

/// Result of a full training run.
#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub metrics: Vec<MetricsRow>,
    pub final_eval: EvalStats,
    pub networks: Networks,
    pub skipped_batches: usize,
}

/// Trains to `optim.total_steps`. With an output directory, writes
/// `metrics.csv` row by row plus the final (and any periodic) checkpoints.
pub fn train(cfg: &RunConfig, seed: u64, out_dir: Option<&Path>) -> Result<TrainSummary> {
    let mut trainer = Trainer::new(cfg.clone(), seed)?;
    let mut writer = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            Some(csv::Writer::from_path(dir.join("metrics.csv"))?)
        }
        None => None,
    };
    let interval = cfg.logging.checkpoint_interval;
    let mut next_ckpt = interval;
    let mut metrics = Vec::new();
    while !trainer.is_finished() {
        let row = trainer.iterate()?;
        if let Some(w) = writer.as_mut() {
            w.serialize(&row)?;
            w.flush().map_err(|e| Error::io(Path::new("metrics.csv"), e))?;
        }
        if let (Some(dir), true) = (out_dir, interval > 0 && trainer.env_steps() >= next_ckpt) {
            trainer.save_checkpoint(dir, &format!("checkpoint_{:08}", trainer.env_steps()))?;
            next_ckpt += interval;
        }
        metrics.push(row);
    }
    if let Some(dir) = out_dir {
        trainer.save_checkpoint(dir, "checkpoint")?;
    }
    Ok(TrainSummary {
        metrics,
        final_eval: trainer.last_eval.take().expect("final iteration evaluates"),
        skipped_batches: trainer.skipped_batches(),
        networks: trainer.nets,
    })
}

/// The networks a run with this config and seed starts from.
pub fn init_networks(cfg: &RunConfig, seed: u64) -> Result<Networks> {
    let obs_dim = cfg.env.build()?.obs_dim();
    Networks::new(cfg, obs_dim, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Loads a checkpoint written by [`train`] for the architecture in `cfg`.
pub fn load_networks(cfg: &RunConfig, path: &Path) -> Result<Networks> {
    let mut nets = init_networks(cfg, 0)?;
    nets.load(path)?;
    Ok(nets)
}
