//! SGD with momentum and Adam.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub const DEFAULT_MOMENTUM: f64 = 0.9;

    pub fn sgd() -> Self {
        OptimizerKind::SgdMomentum { momentum: Self::DEFAULT_MOMENTUM }
    }

    /// Adam with β = (0.9, 0.999).
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// Adam with β1 = 0.5, the usual choice for adversarial training.
    pub fn adam_gan() -> Self {
        OptimizerKind::Adam { beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    shape: Vec<usize>,
    first: Vec<f64>,
    second: Vec<f64>,
}

/// Optimizer hyperparameters plus per-parameter moment buffers.
///
/// Buffers are allocated on the first step from the shapes of the
/// parameters passed in; every later step must pass parameters of the same
/// shapes in the same order.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    learning_rate: f64,
    moments: Vec<Moments>,
    step_count: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self { kind, learning_rate, moments: Vec::new(), step_count: 0 }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update to every parameter, then zeroes their gradients.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        if let Some(p) = params.iter().find(|p| p.grad().is_none()) {
            return Err(Error::Optimizer(format!("parameter of shape {:?} has no gradient", p.shape())));
        }
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| Moments {
                    shape: p.shape().to_vec(),
                    first: vec![0.0; p.numel()],
                    second: match self.kind {
                        OptimizerKind::Adam { .. } => vec![0.0; p.numel()],
                        OptimizerKind::SgdMomentum { .. } => Vec::new(),
                    },
                })
                .collect();
        }
        if self.moments.len() != params.len()
            || self.moments.iter().zip(params.iter()).any(|(m, p)| m.shape != p.shape())
        {
            return Err(Error::Optimizer("parameter list changed shape between steps".into()));
        }
        self.step_count += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                for (p, m) in params.iter_mut().zip(&mut self.moments) {
                    let (grad, data) = p.grad_and_data_mut();
                    let grad = grad.expect("checked above");
                    for ((w, g), v) in data.iter_mut().zip(grad.iter_mut()).zip(&mut m.first) {
                        *v = momentum * *v + *g;
                        *w -= lr * *v;
                        *g = 0.0;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.step_count as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (p, m) in params.iter_mut().zip(&mut self.moments) {
                    let (grad, data) = p.grad_and_data_mut();
                    let grad = grad.expect("checked above");
                    for (((w, g), m1), m2) in data.iter_mut().zip(grad.iter_mut()).zip(&mut m.first).zip(&mut m.second) {
                        *m1 = beta1 * *m1 + (1.0 - beta1) * *g;
                        *m2 = beta2 * *m2 + (1.0 - beta2) * *g * *g;
                        let mhat = *m1 / c1;
                        let vhat = *m2 / c2;
                        *w -= lr * mhat / (vhat.sqrt() + eps);
                        *g = 0.0;
                    }
                }
            }
        }
        Ok(())
    }
}
