use ndarray::{linalg::general_mat_mul, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init;
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn gain(self) -> f64 {
        match self {
            Activation::Relu => 2f64.sqrt(),
            Activation::Tanh => 5.0 / 3.0,
            Activation::Identity => 1.0,
        }
    }
}

/// Shape of a multilayer perceptron. Hidden layers are
/// `linear -> [layer norm] -> activation`; the output layer is linear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub layer_norm: bool,
    pub orthogonal_init: bool,
    /// Scale of the output layer's initial weights.
    pub output_gain: f64,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims,
            output_dim,
            activation: Activation::Relu,
            layer_norm: true,
            orthogonal_init: true,
            output_gain: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::invalid(format!("every layer width must be >= 1: {self:?}")));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden_dims);
        w.push(self.output_dim);
        w
    }
}

/// A named flat parameter array with its gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grads: Vec<f64>,
}

impl ParameterBlock {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Self {
        let len = shape.iter().product();
        assert_eq!(values.len(), len, "block values must match the shape");
        Self {
            name: name.into(),
            shape,
            grads: vec![0.0; len],
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().chain(&self.grads).all(|x| x.is_finite())
    }

    fn matrix(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.shape[0], self.shape[1]), &self.values).expect("matrix block")
    }

    fn vector(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.values[..])
    }

    fn grad_matrix(&mut self) -> ArrayViewMut2<'_, f64> {
        ArrayViewMut2::from_shape((self.shape[0], self.shape[1]), &mut self.grads).expect("matrix block")
    }

    fn grad_vector(&mut self) -> ArrayViewMut1<'_, f64> {
        ArrayViewMut1::from(&mut self.grads[..])
    }
}

#[derive(Clone, Copy, Debug)]
struct LayerBlocks {
    weight: usize,
    bias: usize,
    norm: Option<(usize, usize)>,
    hidden: bool,
}

/// Activations recorded by [`Mlp::forward`] for the matching backward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    version: u64,
    /// Input to each linear layer, plus the final output.
    inputs: Vec<Array2<f64>>,
    /// Per hidden layer: normalised pre-activations and inverse std per row.
    norms: Vec<Option<(Array2<f64>, Array1<f64>)>>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        self.inputs.last().expect("tape holds the output")
    }
}

#[derive(Clone, Debug)]
pub struct Mlp {
    name: String,
    spec: MlpSpec,
    blocks: Vec<ParameterBlock>,
    layers: Vec<LayerBlocks>,
    version: u64,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(name: &str, spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let widths = spec.widths();
        let n_layers = widths.len() - 1;
        let mut blocks = Vec::new();
        let mut layers = Vec::new();
        for l in 0..n_layers {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let hidden = l + 1 < n_layers;
            let weights = if spec.orthogonal_init {
                let gain = if hidden { spec.activation.gain() } else { spec.output_gain };
                init::orthogonal(rng, fan_in, fan_out, gain)
            } else {
                let mut w = init::glorot(rng, fan_in, fan_out);
                if !hidden {
                    w.iter_mut().for_each(|x| *x *= spec.output_gain);
                }
                w
            };
            let weight = blocks.len();
            blocks.push(ParameterBlock::new(format!("{name}.l{l}.weight"), vec![fan_in, fan_out], weights));
            let bias = blocks.len();
            blocks.push(ParameterBlock::new(format!("{name}.l{l}.bias"), vec![fan_out], vec![0.0; fan_out]));
            let norm = if hidden && spec.layer_norm {
                let g = blocks.len();
                blocks.push(ParameterBlock::new(format!("{name}.l{l}.ln_gain"), vec![fan_out], vec![1.0; fan_out]));
                let b = blocks.len();
                blocks.push(ParameterBlock::new(format!("{name}.l{l}.ln_bias"), vec![fan_out], vec![0.0; fan_out]));
                Some((g, b))
            } else {
                None
            };
            layers.push(LayerBlocks {
                weight,
                bias,
                norm,
                hidden,
            });
        }
        Ok(Self {
            name: name.to_string(),
            spec,
            blocks,
            layers,
            version: 0,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn blocks(&self) -> &[ParameterBlock] {
        &self.blocks
    }

    /// Mutable access to the parameters; invalidates outstanding tapes.
    pub fn blocks_mut(&mut self) -> &mut [ParameterBlock] {
        self.version += 1;
        &mut self.blocks
    }

    /// Gradient buffers only; tapes stay valid.
    pub fn zero_grads(&mut self) {
        for b in &mut self.blocks {
            b.grads.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(ParameterBlock::len).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.values.iter().copied()).collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.grads.iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                what: "flat parameters",
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut offset = 0;
        for b in self.blocks_mut() {
            let n = b.len();
            b.values.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                what: "network input",
                expected: self.spec.input_dim,
                got: x.ncols(),
            });
        }
        Ok(())
    }

    fn linear(&self, layer: &LayerBlocks, x: &ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = x.dot(&self.blocks[layer.weight].matrix());
        z += &self.blocks[layer.bias].vector();
        z
    }

    fn normalize(&self, gain: usize, bias: usize, z: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
        let width = z.ncols() as f64;
        let mut xhat = z.clone();
        let mut inv_std = Array1::zeros(z.nrows());
        for (mut row, inv) in xhat.axis_iter_mut(Axis(0)).zip(inv_std.iter_mut()) {
            let mean = row.sum() / width;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / width;
            *inv = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * *inv);
        }
        let mut y = &xhat * &self.blocks[gain].vector();
        y += &self.blocks[bias].vector();
        (y, xhat, inv_std)
    }

    fn activate(&self, y: &mut Array2<f64>) {
        match self.spec.activation {
            Activation::Relu => y.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => y.mapv_inplace(f64::tanh),
            Activation::Identity => {}
        }
    }

    /// Forward pass recording a tape for [`Mlp::backward`].
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Tape)> {
        self.check_input(&x)?;
        let mut inputs = vec![x.to_owned()];
        let mut norms = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let z = self.linear(layer, &inputs.last().expect("input").view());
            let mut y = if layer.hidden {
                let mut y = match layer.norm {
                    Some((g, b)) => {
                        let (y, xhat, inv) = self.normalize(g, b, &z);
                        norms.push(Some((xhat, inv)));
                        y
                    }
                    None => {
                        norms.push(None);
                        z
                    }
                };
                self.activate(&mut y);
                y
            } else {
                norms.push(None);
                z
            };
            if !y.iter().all(|v| v.is_finite()) {
                y.mapv_inplace(|v| if v.is_finite() { v } else { f64::NAN });
            }
            inputs.push(y);
        }
        let out = inputs.last().expect("output").clone();
        Ok((
            out,
            Tape {
                version: self.version,
                inputs,
                norms,
            },
        ))
    }

    /// Forward pass without recording anything.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        for layer in &self.layers {
            let z = self.linear(layer, &h.view());
            h = if layer.hidden {
                let mut y = match layer.norm {
                    Some((g, b)) => self.normalize(g, b, &z).0,
                    None => z,
                };
                self.activate(&mut y);
                y
            } else {
                z
            };
        }
        Ok(h)
    }

    /// Sign pattern of every hidden pre-activation for the batch. Two inputs or
    /// parameter settings with equal patterns lie in the same linear piece of
    /// a ReLU network, which is what a finite-difference check needs.
    pub fn activation_pattern(&self, x: ArrayView2<'_, f64>) -> Result<Vec<bool>> {
        let (_, tape) = self.forward(x)?;
        Ok(tape.inputs[1..self.layers.len()]
            .iter()
            .flat_map(|h| h.iter().map(|&v| v > 0.0))
            .collect())
    }

    /// Accumulates `d loss / d params` for the taped batch into the gradient
    /// buffers and returns `d loss / d input`.
    pub fn backward(&mut self, tape: &Tape, upstream: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if tape.version != self.version || tape.inputs.len() != self.layers.len() + 1 {
            return Err(Error::StaleTape);
        }
        let out = tape.output();
        if upstream.dim() != out.dim() {
            return Err(Error::DimensionMismatch {
                what: "upstream gradient",
                expected: out.len(),
                got: upstream.len(),
            });
        }
        let mut grad = upstream.to_owned();
        for l in (0..self.layers.len()).rev() {
            let layer = self.layers[l];
            if layer.hidden {
                let y = &tape.inputs[l + 1];
                match self.spec.activation {
                    Activation::Relu => grad.zip_mut_with(y, |g, &y| {
                        if y <= 0.0 {
                            *g = 0.0
                        }
                    }),
                    Activation::Tanh => grad.zip_mut_with(y, |g, &y| *g *= 1.0 - y * y),
                    Activation::Identity => {}
                }
                if let (Some((gi, bi)), Some((xhat, inv_std))) = (layer.norm, &tape.norms[l]) {
                    self.blocks[bi].grad_vector().scaled_add(1.0, &grad.sum_axis(Axis(0)));
                    self.blocks[gi].grad_vector().scaled_add(1.0, &(&grad * xhat).sum_axis(Axis(0)));
                    let dxhat = &grad * &self.blocks[gi].vector();
                    let width = dxhat.ncols() as f64;
                    let mut dz = dxhat;
                    for ((mut row, xrow), &inv) in dz
                        .axis_iter_mut(Axis(0))
                        .zip(xhat.axis_iter(Axis(0)))
                        .zip(inv_std.iter())
                    {
                        let mean_d = row.sum() / width;
                        let mean_dx = row.iter().zip(xrow.iter()).map(|(d, x)| d * x).sum::<f64>() / width;
                        row.zip_mut_with(&xrow, |d, &x| *d = inv * (*d - mean_d - x * mean_dx));
                    }
                    grad = dz;
                }
            }
            let x = &tape.inputs[l];
            {
                let mut gw = self.blocks[layer.weight].grad_matrix();
                general_mat_mul(1.0, &x.t(), &grad, 1.0, &mut gw);
            }
            self.blocks[layer.bias].grad_vector().scaled_add(1.0, &grad.sum_axis(Axis(0)));
            grad = grad.dot(&self.blocks[layer.weight].matrix().t());
        }
        Ok(grad)
    }
}
