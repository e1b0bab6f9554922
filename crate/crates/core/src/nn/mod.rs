//! Networks: the task-incremental classifier and the conditional GAN pair.

mod gan;
mod neocortex;

pub use gan::{DiscriminatorNet, GeneratorNet, Init, Mlp, GAN_INIT};
pub use neocortex::{
    make_teacher, ArchConfig, Bound, Head, HeadScope, ModelInput, ModelState, TeacherModel, Trainable,
    IMAGE_PIXELS, IMAGE_SIDE,
};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Cv,
    Nlp,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Cv => "cv",
            Modality::Nlp => "nlp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cv" => Some(Modality::Cv),
            "nlp" => Some(Modality::Nlp),
            _ => None,
        }
    }
}

/// Uniform `±1/√fan_in` initialization for weights and biases.
pub(crate) fn uniform_init(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let numel = shape.iter().product();
    Tensor::new(shape, rng.uniforms(numel, -bound, bound), true).expect("init shape")
}

/// SHA-256 over names, shapes and exact bit patterns of a tensor set.
pub fn hash_tensors<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> String {
    let mut h = Sha256::new();
    for (name, t) in tensors {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        for &d in t.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for v in t.data() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
