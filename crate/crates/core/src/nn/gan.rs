use super::uniform_init;
use crate::autograd::{Activation, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Weight initialization for [`Mlp`] layers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Weights and biases uniform in `±1/√fan_in`.
    FanInUniform,
    /// Weights `N(0, std²)`, biases zero.
    Normal { std: f64 },
}

/// Initialization of both GAN networks.
pub const GAN_INIT: Init = Init::Normal { std: 0.02 };

/// Fully connected stack with one activation between layers and an
/// optional one at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<(Tensor, Tensor)>,
    hidden: Activation,
    output: Option<Activation>,
}

impl Mlp {
    pub fn new(widths: &[usize], hidden: Activation, output: Option<Activation>, init: Init, rng: &mut Rng) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Shape(format!("invalid layer widths {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .map(|w| match init {
                Init::FanInUniform => (uniform_init(&[w[0], w[1]], w[0], rng), uniform_init(&[w[1]], w[0], rng)),
                Init::Normal { std } => {
                    let weights = rng.normals(w[0] * w[1]).into_iter().map(|v| v * std).collect();
                    (
                        Tensor::new(&[w[0], w[1]], weights, true).expect("init shape"),
                        Tensor::zeros(&[w[1]], true).expect("init shape"),
                    )
                }
            })
            .collect();
        Ok(Self { layers, hidden, output })
    }

    pub fn from_layers(layers: Vec<(Tensor, Tensor)>, hidden: Activation, output: Option<Activation>) -> Result<Self> {
        for (i, (w, b)) in layers.iter().enumerate() {
            let ok = matches!(w.shape(), [_, o] if *o == b.numel()) && b.shape().len() == 1;
            let chained = i == 0 || layers[i - 1].0.shape()[1] == w.shape()[0];
            if !ok || !chained {
                return Err(Error::Format(format!("layer {i} has inconsistent shapes {:?}/{:?}", w.shape(), b.shape())));
            }
        }
        if layers.is_empty() {
            return Err(Error::Format("an MLP needs at least one layer".into()));
        }
        Ok(Self { layers, hidden, output })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].0.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").1.numel()
    }

    pub fn layers(&self) -> &[(Tensor, Tensor)] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|(w, b)| w.numel() + b.numel()).sum()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<(Var, Var)> {
        self.layers
            .iter()
            .map(|(w, b)| {
                let w = tape.input(w.shape(), w.data().to_vec(), trainable).expect("layer shape");
                let b = tape.input(b.shape(), b.data().to_vec(), trainable).expect("layer shape");
                (w, b)
            })
            .collect()
    }

    pub fn forward(&self, tape: &mut Tape, bound: &[(Var, Var)], x: Var) -> Result<Var> {
        let mut h = x;
        for (i, &(w, b)) in bound.iter().enumerate() {
            h = tape.linear(h, w, b)?;
            if i + 1 < bound.len() {
                h = tape.activation(self.hidden, h);
            } else if let Some(act) = self.output {
                h = tape.activation(act, h);
            }
        }
        Ok(h)
    }

    pub fn collect_grads(&mut self, tape: &Tape, bound: &[(Var, Var)]) -> Result<()> {
        for ((w, b), &(vw, vb)) in self.layers.iter_mut().zip(bound) {
            tape.write_grad(vw, w)?;
            tape.write_grad(vb, b)?;
        }
        Ok(())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, (w, b))| [(format!("{prefix}.{i}.weight"), w), (format!("{prefix}.{i}.bias"), b)])
            .collect()
    }
}

/// Conditional generator: `[z ⊕ onehot(class)] → hidden… → output`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorNet {
    latent_dim: usize,
    cond_dim: usize,
    mlp: Mlp,
}

impl GeneratorNet {
    /// `bounded` puts a tanh on the output so samples land in `[−1, 1]`.
    pub fn new(
        latent_dim: usize,
        cond_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        bounded: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        let widths: Vec<usize> = std::iter::once(latent_dim + cond_dim).chain(hidden.iter().copied()).chain([output_dim]).collect();
        let output = bounded.then_some(Activation::Tanh);
        Ok(Self { latent_dim, cond_dim, mlp: Mlp::new(&widths, Activation::LeakyRelu, output, GAN_INIT, rng)? })
    }

    pub fn from_mlp(latent_dim: usize, cond_dim: usize, mlp: Mlp) -> Result<Self> {
        if mlp.input_dim() != latent_dim + cond_dim {
            return Err(Error::Format(format!(
                "generator input {} does not match latent {latent_dim} + condition {cond_dim}",
                mlp.input_dim()
            )));
        }
        Ok(Self { latent_dim, cond_dim, mlp })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn output_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    pub fn bounded(&self) -> bool {
        self.mlp.output == Some(Activation::Tanh)
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn forward(&self, tape: &mut Tape, bound: &[(Var, Var)], z: Var, onehot: Var) -> Result<Var> {
        let x = tape.concat_cols(&[z, onehot])?;
        self.mlp.forward(tape, bound, x)
    }

    /// Inference: `n` samples from row-major latents and one-hot conditions.
    pub fn generate(&self, z: Vec<f64>, onehot: Vec<f64>, n: usize) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.mlp.bind(&mut tape, false);
        let z = tape.input(&[n, self.latent_dim], z, false)?;
        let c = tape.input(&[n, self.cond_dim], onehot, false)?;
        let out = self.forward(&mut tape, &bound, z, c)?;
        Ok(tape.to_tensor(out))
    }
}

/// Conditional discriminator: `[x ⊕ onehot(class)] → hidden… → sigmoid`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorNet {
    input_dim: usize,
    cond_dim: usize,
    mlp: Mlp,
}

impl DiscriminatorNet {
    pub fn new(input_dim: usize, cond_dim: usize, hidden: &[usize], rng: &mut Rng) -> Result<Self> {
        let widths: Vec<usize> = std::iter::once(input_dim + cond_dim).chain(hidden.iter().copied()).chain([1]).collect();
        Ok(Self { input_dim, cond_dim, mlp: Mlp::new(&widths, Activation::LeakyRelu, Some(Activation::Sigmoid), GAN_INIT, rng)? })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    /// Probability that each row of `x` is real, shape `batch × 1`.
    pub fn forward(&self, tape: &mut Tape, bound: &[(Var, Var)], x: Var, onehot: Var) -> Result<Var> {
        let h = tape.concat_cols(&[x, onehot])?;
        self.mlp.forward(tape, bound, h)
    }
}
