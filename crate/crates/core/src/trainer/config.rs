use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::{EnvConfig, PursuitConfig};
use crate::error::{Error, Result};
use crate::nn::AdamConfig;
use crate::teammates::{default_pool, UncontrolledPolicy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    ShapleyMachine,
    Poam,
    BanzhafMachine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CriticTarget {
    /// Truncated λ-return over `m` components.
    Ttd,
    /// λ-return over the whole remaining episode.
    LambdaFull,
}

impl Variant {
    pub fn uses_shaped_reward(self) -> bool {
        self == Variant::ShapleyMachine
    }

    pub fn uses_efficiency_loss(self) -> bool {
        self == Variant::ShapleyMachine
    }

    pub fn critic_target(self) -> CriticTarget {
        match self {
            Variant::Poam => CriticTarget::LambdaFull,
            Variant::ShapleyMachine | Variant::BanzhafMachine => CriticTarget::Ttd,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::ShapleyMachine => "shapley_machine",
            Variant::Poam => "poam",
            Variant::BanzhafMachine => "banzhaf_machine",
        }
    }
}

/// Which teammates `j != i` enter agent `i`'s shaping sum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapingScope {
    AllAgents,
    ControlledOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeamConfig {
    pub pool: Vec<UncontrolledPolicy>,
    /// Uncontrolled agents see the unmasked state instead of their own view.
    pub full_observation: bool,
}

impl Default for TeamConfig {
    fn default() -> Self {
        Self {
            pool: default_pool(),
            full_observation: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgoConfig {
    pub variant: Variant,
    pub gamma: f64,
    pub lambda: f64,
    /// Truncation horizon; defaults to `min(2^n - 1, T)`.
    pub m: Option<usize>,
    pub gae_lambda: f64,
    /// Observation-action frames fed to every network.
    pub history: usize,
    pub agent_id: bool,
    pub hidden: usize,
    pub embed_dim: usize,
    pub use_obs_norm: bool,
    pub use_orthogonal_init: bool,
    pub use_adv_std: bool,
    pub standardise_rewards: bool,
    pub shaping_scope: ShapingScope,
    /// Linear ramp of α from 0 over this many environment steps (0 = fixed).
    pub alpha_warmup_steps: usize,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        Self {
            variant: Variant::ShapleyMachine,
            gamma: 0.99,
            lambda: 0.85,
            m: None,
            gae_lambda: 0.95,
            history: 4,
            agent_id: true,
            hidden: 64,
            embed_dim: 16,
            use_obs_norm: true,
            use_orthogonal_init: true,
            use_adv_std: true,
            standardise_rewards: true,
            shaping_scope: ShapingScope::AllAgents,
            alpha_warmup_steps: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub entropy_coef: f64,
    pub clip_epsilon: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            beta1: 0.5,
            beta2: 0.01,
            entropy_coef: 0.05,
            clip_epsilon: 0.2,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta1, self.beta2, self.entropy_coef, self.clip_epsilon];
        if all.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config(format!("loss weights must be finite and nonnegative: {self:?}")));
        }
        if self.alpha >= 1.0 || self.clip_epsilon >= 1.0 {
            return Err(Error::Config("alpha and clip_epsilon must be below 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub lr: f64,
    pub ed_lr: f64,
    /// Second-moment decay of Adam.
    pub optim_alpha: f64,
    pub optim_eps: f64,
    /// First-moment decay of Adam.
    pub adam_beta1: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub ed_epochs: usize,
    pub ed_minibatches: usize,
    /// Joint environment steps collected per iteration, over all workers.
    pub buffer_size: usize,
    pub num_parallel_envs: usize,
    /// Global gradient-norm cap per network group; 0 disables.
    pub max_grad_norm: f64,
    pub total_steps: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            ed_lr: 5e-4,
            optim_alpha: 0.99,
            optim_eps: 1e-5,
            adam_beta1: 0.9,
            epochs: 5,
            minibatches: 1,
            ed_epochs: 1,
            ed_minibatches: 1,
            buffer_size: 256,
            num_parallel_envs: 8,
            max_grad_norm: 10.0,
            total_steps: 300_000,
        }
    }
}

impl OptimConfig {
    pub fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            learning_rate: lr,
            beta1: self.adam_beta1,
            beta2: self.optim_alpha,
            epsilon: self.optim_eps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoggingConfig {
    /// Greedy evaluation every this many environment steps (0 = final only).
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub final_eval_episodes: usize,
    /// Checkpoint every this many environment steps (0 = final only).
    pub checkpoint_interval: usize,
}

impl Default for LoggingConfig {
    fn default() -> Self {
        Self {
            eval_interval: 10_000,
            eval_episodes: 32,
            final_eval_episodes: 200,
            checkpoint_interval: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_env")]
    pub env: EnvConfig,
    #[serde(default)]
    pub team: TeamConfig,
    #[serde(default)]
    pub algo: AlgoConfig,
    #[serde(default)]
    pub losses: LossWeights,
    #[serde(default)]
    pub optim: OptimConfig,
    #[serde(default)]
    pub logging: LoggingConfig,
}

fn default_env() -> EnvConfig {
    EnvConfig::Pursuit(PursuitConfig::default())
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: default_env(),
            team: TeamConfig::default(),
            algo: AlgoConfig::default(),
            losses: LossWeights::default(),
            optim: OptimConfig::default(),
            logging: LoggingConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn n_agents(&self) -> usize {
        self.env.n_agents()
    }

    pub fn episode_limit(&self) -> usize {
        match &self.env {
            EnvConfig::Pursuit(c) => c.episode_limit,
            EnvConfig::Diagnostic { .. } => 1,
        }
    }

    /// `m`, defaulting to the number of non-empty coalitions capped at `T`.
    pub fn horizon_m(&self) -> usize {
        self.algo.m.unwrap_or_else(|| default_m(self.n_agents(), self.episode_limit()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.env.build()?;
        let a = &self.algo;
        if !(0.0..=1.0).contains(&a.gamma) || !(0.0..1.0).contains(&a.lambda) || !(0.0..=1.0).contains(&a.gae_lambda) {
            return bad(format!("need gamma in [0,1], lambda in [0,1), gae_lambda in [0,1]: {a:?}"));
        }
        if a.m == Some(0) || a.history == 0 || a.hidden == 0 || a.embed_dim == 0 {
            return bad("m, history, hidden and embed_dim must be at least 1".into());
        }
        self.losses.validate()?;
        let o = &self.optim;
        if o.lr <= 0.0 || o.ed_lr <= 0.0 {
            return bad("learning rates must be positive".into());
        }
        self.optim.adam(o.lr).validate().map_err(|e| Error::Config(e.to_string()))?;
        if o.epochs == 0 || o.minibatches == 0 || o.ed_minibatches == 0 || o.num_parallel_envs == 0 {
            return bad("epochs, minibatches and num_parallel_envs must be at least 1".into());
        }
        if o.buffer_size == 0 || !o.buffer_size.is_multiple_of(o.num_parallel_envs) {
            return bad(format!(
                "buffer_size {} must be a positive multiple of num_parallel_envs {}",
                o.buffer_size, o.num_parallel_envs
            ));
        }
        if o.total_steps < o.buffer_size {
            return bad("total_steps is smaller than one buffer".into());
        }
        if self.team.pool.is_empty() {
            return bad("team.pool must list at least one policy".into());
        }
        for p in &self.team.pool {
            p.validate()?;
        }
        if self.n_agents() < 2 {
            return bad("open teams need at least 2 agents".into());
        }
        if self.logging.eval_episodes == 0 || self.logging.final_eval_episodes == 0 {
            return bad("evaluation episode counts must be at least 1".into());
        }
        Ok(())
    }
}

pub fn default_m(n_agents: usize, episode_limit: usize) -> usize {
    let coalitions = if n_agents >= usize::BITS as usize - 1 {
        usize::MAX
    } else {
        (1usize << n_agents) - 1
    };
    coalitions.min(episode_limit)
}
