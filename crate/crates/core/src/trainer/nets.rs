use std::collections::VecDeque;
use std::path::Path;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng;

use super::config::RunConfig;
use crate::envs::N_ACTIONS;
use crate::error::{Error, Result};
use crate::nn::{checkpoint, Activation, Mlp, MlpSpec, ParameterBlock, RunningMeanStd};

/// Sizes shared by every network of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub n_agents: usize,
    pub obs_dim: usize,
    pub history: usize,
    pub agent_id: bool,
    pub embed_dim: usize,
    pub hidden: usize,
}

impl Dims {
    pub fn frame_dim(&self) -> usize {
        self.obs_dim + N_ACTIONS
    }

    /// History window plus the optional agent one-hot.
    pub fn in_dim(&self) -> usize {
        self.history * self.frame_dim() + if self.agent_id { self.n_agents } else { 0 }
    }

    pub fn head_in_dim(&self) -> usize {
        self.in_dim() + self.embed_dim
    }
}

/// The last `H` `[observation, one-hot previous action]` frames of one agent,
/// zero-padded at the start of an episode.
#[derive(Clone, Debug)]
pub struct History {
    frames: VecDeque<Vec<f64>>,
    dims: Dims,
}

impl History {
    pub fn new(dims: Dims) -> Self {
        Self {
            frames: VecDeque::with_capacity(dims.history),
            dims,
        }
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }

    pub fn push(&mut self, obs: &[f64], prev_action: Option<usize>) {
        let mut frame = Vec::with_capacity(self.dims.frame_dim());
        frame.extend_from_slice(obs);
        let mut onehot = [0.0; N_ACTIONS];
        if let Some(a) = prev_action {
            onehot[a] = 1.0;
        }
        frame.extend_from_slice(&onehot);
        if self.frames.len() == self.dims.history {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
    }

    pub fn input_dim(&self) -> usize {
        self.dims.in_dim()
    }

    /// Appends this agent's network input to `out`.
    pub fn write_input(&self, agent: usize, out: &mut Vec<f64>) {
        let pad = self.dims.history - self.frames.len();
        out.extend(std::iter::repeat_n(0.0, pad * self.dims.frame_dim()));
        for f in &self.frames {
            out.extend_from_slice(f);
        }
        if self.dims.agent_id {
            out.extend((0..self.dims.n_agents).map(|j| if j == agent { 1.0 } else { 0.0 }));
        }
    }
}

/// Encoder, the two agent-model decoders, actor and critic, all shared by
/// every agent, plus the observation normaliser.
#[derive(Clone, Debug)]
pub struct Networks {
    pub dims: Dims,
    pub encoder: Mlp,
    pub obs_decoder: Mlp,
    pub act_decoder: Mlp,
    pub actor: Mlp,
    pub critic: Mlp,
    pub obs_norm: RunningMeanStd,
    pub use_obs_norm: bool,
}

impl Networks {
    pub fn new<R: Rng + ?Sized>(cfg: &RunConfig, obs_dim: usize, rng: &mut R) -> Result<Self> {
        let a = &cfg.algo;
        let dims = Dims {
            n_agents: cfg.n_agents(),
            obs_dim,
            history: a.history,
            agent_id: a.agent_id,
            embed_dim: a.embed_dim,
            hidden: a.hidden,
        };
        let spec = |input: usize, hidden: Vec<usize>, output: usize, gain: f64| MlpSpec {
            input_dim: input,
            hidden_dims: hidden,
            output_dim: output,
            activation: Activation::Relu,
            layer_norm: true,
            orthogonal_init: a.use_orthogonal_init,
            output_gain: gain,
        };
        let h = a.hidden;
        let others = dims.n_agents - 1;
        Ok(Self {
            encoder: Mlp::new("encoder", spec(dims.in_dim(), vec![h], a.embed_dim, 1.0), rng)?,
            obs_decoder: Mlp::new("obs_decoder", spec(a.embed_dim, vec![h, h], others * obs_dim, 1.0), rng)?,
            act_decoder: Mlp::new("act_decoder", spec(a.embed_dim, vec![h, h], others * N_ACTIONS, 1.0), rng)?,
            actor: Mlp::new("actor", spec(dims.head_in_dim(), vec![h, h], N_ACTIONS, 0.01), rng)?,
            critic: Mlp::new("critic", spec(dims.head_in_dim(), vec![h, h], 1, 1.0), rng)?,
            obs_norm: RunningMeanStd::new(obs_dim),
            use_obs_norm: a.use_obs_norm,
            dims,
        })
    }

    pub fn normalize_obs(&self, obs: &[f64]) -> Vec<f64> {
        if self.use_obs_norm {
            self.obs_norm.normalize(obs)
        } else {
            obs.to_vec()
        }
    }

    /// `[inputs, encoder(inputs)]`; the embedding is a constant here.
    pub fn head_inputs(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let e = self.encoder.predict(x)?;
        Ok(concatenate(Axis(1), &[x, e.view()]).expect("rows agree"))
    }

    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.actor.predict(self.head_inputs(x)?.view())
    }

    pub fn values(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(self.critic.predict(self.head_inputs(x)?.view())?.into_raw_vec_and_offset().0)
    }

    fn nets(&self) -> [&Mlp; 5] {
        [&self.encoder, &self.obs_decoder, &self.act_decoder, &self.actor, &self.critic]
    }

    fn norm_blocks(&self) -> [ParameterBlock; 3] {
        let d = self.dims.obs_dim;
        [
            ParameterBlock::new("obs_norm.mean", vec![d], self.obs_norm.mean.clone()),
            ParameterBlock::new("obs_norm.var", vec![d], self.obs_norm.var.clone()),
            ParameterBlock::new("obs_norm.count", vec![1], vec![self.obs_norm.count]),
        ]
    }

    pub fn manifest(&self) -> String {
        let norm = self.norm_blocks();
        checkpoint::manifest(self.nets().iter().flat_map(|n| n.blocks().iter()).chain(norm.iter()))
    }

    pub fn param_count(&self) -> usize {
        self.nets().iter().map(|n| n.param_count()).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let norm = self.norm_blocks();
        let blocks: Vec<&ParameterBlock> = self
            .nets()
            .iter()
            .flat_map(|n| n.blocks().iter())
            .chain(norm.iter())
            .collect();
        checkpoint::encode(&blocks)
    }

    /// Loads parameters; the stored manifest must match this architecture.
    pub fn load_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        let mut norm = self.norm_blocks();
        let mut staged: Vec<Vec<ParameterBlock>> = self.nets().iter().map(|n| n.blocks().to_vec()).collect();
        {
            let mut refs: Vec<&mut ParameterBlock> = staged.iter_mut().flat_map(|v| v.iter_mut()).collect();
            refs.extend(norm.iter_mut());
            checkpoint::decode_into(bytes, &mut refs)?;
        }
        let nets = [
            &mut self.encoder,
            &mut self.obs_decoder,
            &mut self.act_decoder,
            &mut self.actor,
            &mut self.critic,
        ];
        for (net, blocks) in nets.into_iter().zip(staged) {
            for (dst, src) in net.blocks_mut().iter_mut().zip(blocks) {
                dst.values = src.values;
            }
        }
        let [mean, var, count] = norm;
        self.obs_norm.mean = mean.values;
        self.obs_norm.var = var.values;
        self.obs_norm.count = count.values[0];
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.load_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims() -> Dims {
        Dims {
            n_agents: 3,
            obs_dim: 2,
            history: 3,
            agent_id: true,
            embed_dim: 4,
            hidden: 8,
        }
    }

    #[test]
    fn history_pads_then_slides() {
        let mut h = History::new(dims());
        h.push(&[0.5, -0.5], None);
        let mut x = Vec::new();
        h.write_input(1, &mut x);
        assert_eq!(x.len(), dims().in_dim());
        assert!(x[..14].iter().all(|&v| v == 0.0));
        assert_eq!(&x[14..21], &[0.5, -0.5, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(&x[21..], &[0.0, 1.0, 0.0]);
        for k in 0..5 {
            h.push(&[k as f64, 0.0], Some(k % 5));
        }
        let mut x = Vec::new();
        h.write_input(0, &mut x);
        assert_eq!(x[0], 2.0);
        assert_eq!(x[14], 4.0);
        assert_eq!(x[14 + 2 + 4], 1.0);
    }

    #[test]
    fn identical_histories_get_identical_values() {
        let cfg = RunConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let nets = Networks::new(&cfg, 23, &mut rng).unwrap();
        let row: Vec<f64> = (0..nets.dims.in_dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = Array2::from_shape_fn((2, row.len()), |(_, j)| row[j]);
        let v = nets.values(x.view()).unwrap();
        assert_eq!(v[0], v[1]);
    }

    #[test]
    fn checkpoint_round_trip_and_mismatch() {
        let cfg = RunConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Networks::new(&cfg, 23, &mut rng).unwrap();
        let mut b = Networks::new(&cfg, 23, &mut rng).unwrap();
        b.load_bytes(&a.to_bytes()).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());

        let mut small = cfg.clone();
        small.algo.hidden = 32;
        let mut c = Networks::new(&small, 23, &mut rng).unwrap();
        assert!(matches!(c.load_bytes(&a.to_bytes()), Err(Error::ManifestMismatch(_))));
    }
}
