use serde::{Deserialize, Serialize};

use super::{hash_tensors, uniform_init, Modality};
use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub feature_dim: usize,
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub embed_dim: usize,
    /// Only meaningful for the text modality.
    pub vocab_size: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self { feature_dim: 128, conv1_channels: 16, conv2_channels: 32, embed_dim: 64, vocab_size: 0 }
    }
}

impl ArchConfig {
    fn validate(&self, modality: Modality) -> Result<()> {
        let positive = match modality {
            Modality::Cv => self.feature_dim > 0 && self.conv1_channels > 0 && self.conv2_channels > 0,
            Modality::Nlp => self.feature_dim > 0 && self.embed_dim > 0 && self.vocab_size > 0,
        };
        if positive {
            Ok(())
        } else {
            Err(Error::Shape(format!("invalid {} architecture {self:?}", modality.as_str())))
        }
    }
}

/// A batch as the extractor consumes it.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelInput {
    /// `count` images of 28×28 pixels in `[−1, 1]`, row-major.
    Images { pixels: Vec<f64>, count: usize },
    /// Token bags; bag `i` is `ids[offsets[i]..offsets[i + 1]]`.
    Tokens { ids: Vec<usize>, offsets: Vec<usize> },
}

impl ModelInput {
    pub fn len(&self) -> usize {
        match self {
            ModelInput::Images { count, .. } => *count,
            ModelInput::Tokens { offsets, .. } => offsets.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn modality(&self) -> Modality {
        match self {
            ModelInput::Images { .. } => Modality::Cv,
            ModelInput::Tokens { .. } => Modality::Nlp,
        }
    }
}

/// One task's classification head: `features · weight + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub task_id: usize,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Head {
    pub fn n_classes(&self) -> usize {
        self.bias.numel()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadScope {
    None,
    Task(usize),
    All,
}

/// Which parameters a forward pass records as trainable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable {
    pub extractor: bool,
    pub heads: HeadScope,
}

impl Trainable {
    pub const NOTHING: Trainable = Trainable { extractor: false, heads: HeadScope::None };
    pub const EVERYTHING: Trainable = Trainable { extractor: true, heads: HeadScope::All };

    pub fn head_only(task_id: usize) -> Self {
        Trainable { extractor: false, heads: HeadScope::Task(task_id) }
    }

    pub fn extractor_and_head(task_id: usize) -> Self {
        Trainable { extractor: true, heads: HeadScope::Task(task_id) }
    }
}

/// Tape handles for a model's parameters, in storage order.
#[derive(Debug, Clone)]
pub struct Bound {
    extractor: Vec<Var>,
    heads: Vec<(Var, Var)>,
    trainable: Trainable,
}

/// The shared extractor plus an ordered, growing list of task heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    modality: Modality,
    arch: ArchConfig,
    extractor: Vec<(String, Tensor)>,
    heads: Vec<Head>,
    embedding_frozen: bool,
}

const EMBEDDING: &str = "embedding.weight";

impl ModelState {
    /// Fresh extractor without heads.
    ///
    /// CV: conv 1→16 (3×3, pad 1) → relu → pool → conv 16→32 → relu → pool
    /// → linear 32·7·7→feature_dim → relu. Text: mean-pooled embedding bag
    /// (embed_dim) → linear→feature_dim → relu.
    pub fn new(modality: Modality, arch: ArchConfig, rng: &mut Rng) -> Result<Self> {
        arch.validate(modality)?;
        let mut extractor = Vec::new();
        match modality {
            Modality::Cv => {
                let (c1, c2) = (arch.conv1_channels, arch.conv2_channels);
                extractor.push(("conv1.weight".to_string(), uniform_init(&[c1, 1, 3, 3], 9, rng)));
                extractor.push(("conv1.bias".to_string(), uniform_init(&[c1], 9, rng)));
                extractor.push(("conv2.weight".to_string(), uniform_init(&[c2, c1, 3, 3], c1 * 9, rng)));
                extractor.push(("conv2.bias".to_string(), uniform_init(&[c2], c1 * 9, rng)));
                let flat = c2 * (IMAGE_SIDE / 4) * (IMAGE_SIDE / 4);
                extractor.push(("fc.weight".to_string(), uniform_init(&[flat, arch.feature_dim], flat, rng)));
                extractor.push(("fc.bias".to_string(), uniform_init(&[arch.feature_dim], flat, rng)));
            }
            Modality::Nlp => {
                let table = Tensor::new(
                    &[arch.vocab_size, arch.embed_dim],
                    rng.normals(arch.vocab_size * arch.embed_dim),
                    true,
                )?;
                extractor.push((EMBEDDING.to_string(), table));
                let e = arch.embed_dim;
                extractor.push(("fc.weight".to_string(), uniform_init(&[e, arch.feature_dim], e, rng)));
                extractor.push(("fc.bias".to_string(), uniform_init(&[arch.feature_dim], e, rng)));
            }
        }
        Ok(Self { modality, arch, extractor, heads: Vec::new(), embedding_frozen: false })
    }

    /// Rebuilds a model from stored parts, checking names and shapes
    /// against the architecture.
    pub fn from_parts(
        modality: Modality,
        arch: ArchConfig,
        extractor: Vec<(String, Tensor)>,
        heads: Vec<Head>,
        embedding_frozen: bool,
    ) -> Result<Self> {
        let template = Self::new(modality, arch, &mut Rng::new(0))?;
        if template.extractor.len() != extractor.len()
            || template.extractor.iter().zip(&extractor).any(|(a, b)| a.0 != b.0 || a.1.shape() != b.1.shape())
        {
            return Err(Error::Format("extractor parameters do not match the architecture".into()));
        }
        let mut model = Self { modality, arch, extractor, heads: Vec::new(), embedding_frozen };
        for head in heads {
            if head.weight.shape() != [arch.feature_dim, head.n_classes()] {
                return Err(Error::Format(format!("head {} has shape {:?}", head.task_id, head.weight.shape())));
            }
            if model.has_head(head.task_id) {
                return Err(Error::Format(format!("duplicate head {}", head.task_id)));
            }
            model.heads.push(head);
        }
        Ok(model)
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn feature_dim(&self) -> usize {
        self.arch.feature_dim
    }

    pub fn heads(&self) -> &[Head] {
        &self.heads
    }

    pub fn head(&self, task_id: usize) -> Result<&Head> {
        self.heads
            .iter()
            .find(|h| h.task_id == task_id)
            .ok_or_else(|| Error::Domain(format!("no head for task {task_id}")))
    }

    pub fn has_head(&self, task_id: usize) -> bool {
        self.heads.iter().any(|h| h.task_id == task_id)
    }

    pub fn total_head_outputs(&self) -> usize {
        self.heads.iter().map(Head::n_classes).sum()
    }

    pub fn extractor(&self) -> &[(String, Tensor)] {
        &self.extractor
    }

    pub fn embedding_frozen(&self) -> bool {
        self.embedding_frozen
    }

    /// Pins the text embedding table; it is left out of every later
    /// trainable set. No effect on image models.
    pub fn freeze_embedding(&mut self) {
        if self.modality == Modality::Nlp {
            self.embedding_frozen = true;
        }
    }

    pub fn param_count(&self) -> usize {
        self.extractor.iter().map(|(_, t)| t.numel()).sum::<usize>()
            + self.heads.iter().map(|h| h.weight.numel() + h.bias.numel()).sum::<usize>()
    }

    /// Appends a new head `feature_dim → n_classes`.
    pub fn add_head(&mut self, task_id: usize, n_classes: usize, rng: &mut Rng) -> Result<()> {
        if self.has_head(task_id) {
            return Err(Error::Domain(format!("task {task_id} already has a head")));
        }
        if n_classes == 0 {
            return Err(Error::Shape("a head needs at least one class".into()));
        }
        let f = self.arch.feature_dim;
        let weight = uniform_init(&[f, n_classes], f, rng);
        let bias = uniform_init(&[n_classes], f, rng);
        self.heads.push(Head { task_id, weight, bias });
        Ok(())
    }

    /// Overwrites an existing head with a snapshot of the same shape.
    pub fn load_head(&mut self, state: &Head) -> Result<()> {
        let slot = self
            .heads
            .iter_mut()
            .find(|h| h.task_id == state.task_id)
            .ok_or_else(|| Error::Domain(format!("no head for task {}", state.task_id)))?;
        if slot.weight.shape() != state.weight.shape() || slot.bias.shape() != state.bias.shape() {
            return Err(Error::Shape(format!("head {} snapshot has the wrong shape", state.task_id)));
        }
        *slot = state.clone();
        Ok(())
    }

    pub fn extractor_hash(&self) -> String {
        hash_tensors(self.extractor.iter().map(|(n, t)| (n.as_str(), t)))
    }

    pub fn head_hash(&self, task_id: usize) -> Result<String> {
        let h = self.head(task_id)?;
        Ok(hash_tensors([("weight", &h.weight), ("bias", &h.bias)]))
    }

    /// Hash over every parameter, extractor and heads.
    pub fn full_hash(&self) -> String {
        let names: Vec<(String, String)> =
            self.heads.iter().map(|h| (format!("head.{}.weight", h.task_id), format!("head.{}.bias", h.task_id))).collect();
        let heads = self.heads.iter().zip(&names).flat_map(|(h, (w, b))| [(w.as_str(), &h.weight), (b.as_str(), &h.bias)]);
        hash_tensors(self.extractor.iter().map(|(n, t)| (n.as_str(), t)).chain(heads))
    }

    fn extractor_trainable(&self, name: &str, trainable: Trainable) -> bool {
        trainable.extractor && !(self.embedding_frozen && name == EMBEDDING)
    }

    fn head_trainable(task_id: usize, trainable: Trainable) -> bool {
        match trainable.heads {
            HeadScope::None => false,
            HeadScope::Task(t) => t == task_id,
            HeadScope::All => true,
        }
    }

    /// Copies every parameter onto `tape`, marking the `trainable` ones as
    /// requiring gradients.
    pub fn bind(&self, tape: &mut Tape, trainable: Trainable) -> Bound {
        let extractor = self
            .extractor
            .iter()
            .map(|(name, t)| {
                let rg = self.extractor_trainable(name, trainable);
                tape.input(t.shape(), t.data().to_vec(), rg).expect("parameter shapes are valid")
            })
            .collect();
        let heads = self
            .heads
            .iter()
            .map(|h| {
                let rg = Self::head_trainable(h.task_id, trainable);
                let w = tape.input(h.weight.shape(), h.weight.data().to_vec(), rg).expect("head shape");
                let b = tape.input(h.bias.shape(), h.bias.data().to_vec(), rg).expect("head shape");
                (w, b)
            })
            .collect();
        Bound { extractor, heads, trainable }
    }

    /// Moves gradients from the tape into the trainable parameters.
    pub fn collect_grads(&mut self, tape: &Tape, bound: &Bound) -> Result<()> {
        let trainable = bound.trainable;
        for i in 0..self.extractor.len() {
            if self.extractor_trainable(&self.extractor[i].0, trainable) {
                tape.write_grad(bound.extractor[i], &mut self.extractor[i].1)?;
            }
        }
        for (h, &(w, b)) in self.heads.iter_mut().zip(&bound.heads) {
            if Self::head_trainable(h.task_id, trainable) {
                tape.write_grad(w, &mut h.weight)?;
                tape.write_grad(b, &mut h.bias)?;
            }
        }
        Ok(())
    }

    /// Trainable parameters in a fixed order: extractor, then heads by task.
    pub fn trainable_params_mut(&mut self, trainable: Trainable) -> Vec<&mut Tensor> {
        let frozen_embedding = self.embedding_frozen;
        let mut out: Vec<&mut Tensor> = self
            .extractor
            .iter_mut()
            .filter(|(name, _)| trainable.extractor && !(frozen_embedding && name == EMBEDDING))
            .map(|(_, t)| t)
            .collect();
        for h in &mut self.heads {
            if Self::head_trainable(h.task_id, trainable) {
                out.push(&mut h.weight);
                out.push(&mut h.bias);
            }
        }
        out
    }

    fn ext(&self, bound: &Bound, name: &str) -> Var {
        let i = self.extractor.iter().position(|(n, _)| n == name).expect("known parameter name");
        bound.extractor[i]
    }

    /// `batch × feature_dim` features.
    pub fn forward_features(&self, tape: &mut Tape, bound: &Bound, input: &ModelInput) -> Result<Var> {
        if input.modality() != self.modality {
            return Err(Error::Domain(format!(
                "{} model given {} input",
                self.modality.as_str(),
                input.modality().as_str()
            )));
        }
        match input {
            ModelInput::Images { pixels, count } => {
                if pixels.len() != count * IMAGE_PIXELS || *count == 0 {
                    return Err(Error::Shape(format!("{} pixels for {count} images of 28×28", pixels.len())));
                }
                let x = tape.input(&[*count, 1, IMAGE_SIDE, IMAGE_SIDE], pixels.clone(), false)?;
                let h = tape.conv2d(x, self.ext(bound, "conv1.weight"), Some(self.ext(bound, "conv1.bias")), 1, 1)?;
                let h = tape.relu(h);
                let h = tape.max_pool2(h)?;
                let h = tape.conv2d(h, self.ext(bound, "conv2.weight"), Some(self.ext(bound, "conv2.bias")), 1, 1)?;
                let h = tape.relu(h);
                let h = tape.max_pool2(h)?;
                let flat = self.arch.conv2_channels * (IMAGE_SIDE / 4) * (IMAGE_SIDE / 4);
                let h = tape.reshape(h, &[*count, flat])?;
                let h = tape.linear(h, self.ext(bound, "fc.weight"), self.ext(bound, "fc.bias"))?;
                Ok(tape.relu(h))
            }
            ModelInput::Tokens { ids, offsets } => {
                let pooled = tape.embedding_mean(self.ext(bound, EMBEDDING), ids, offsets)?;
                self.trunk(tape, bound, pooled)
            }
        }
    }

    /// Text trunk after pooling: linear to feature_dim, relu.
    fn trunk(&self, tape: &mut Tape, bound: &Bound, pooled: Var) -> Result<Var> {
        let h = tape.linear(pooled, self.ext(bound, "fc.weight"), self.ext(bound, "fc.bias"))?;
        Ok(tape.relu(h))
    }

    pub fn forward_head(&self, tape: &mut Tape, bound: &Bound, task_id: usize, features: Var) -> Result<Var> {
        let i = self
            .heads
            .iter()
            .position(|h| h.task_id == task_id)
            .ok_or_else(|| Error::Domain(format!("no head for task {task_id}")))?;
        let (w, b) = bound.heads[i];
        tape.linear(features, w, b)
    }

    /// Logits of every head, concatenated in task order.
    pub fn forward_all_heads(&self, tape: &mut Tape, bound: &Bound, features: Var) -> Result<Var> {
        if self.heads.is_empty() {
            return Err(Error::Domain("model has no heads".into()));
        }
        let parts = bound
            .heads
            .iter()
            .map(|&(w, b)| tape.linear(features, w, b))
            .collect::<Result<Vec<_>>>()?;
        tape.concat_cols(&parts)
    }

    /// Runs pooled text embeddings (`batch × embed_dim`) through the trunk
    /// and the heads in `scope`, skipping the embedding table.
    pub fn forward_from_features(&self, tape: &mut Tape, bound: &Bound, scope: HeadScope, pooled: Var) -> Result<Var> {
        if self.modality != Modality::Nlp {
            return Err(Error::Domain("forward_from_features is not applicable to image models".into()));
        }
        match tape.shape(pooled) {
            [_, w] if *w == self.arch.embed_dim => {}
            s => {
                return Err(Error::Shape(format!(
                    "pooled features must be batch×{}, got {s:?}",
                    self.arch.embed_dim
                )))
            }
        }
        let features = self.trunk(tape, bound, pooled)?;
        match scope {
            HeadScope::Task(t) => self.forward_head(tape, bound, t, features),
            HeadScope::All => self.forward_all_heads(tape, bound, features),
            HeadScope::None => Ok(features),
        }
    }

    /// Mean-pooled embeddings of token bags, as plain values.
    pub fn pooled_embeddings(&self, ids: &[usize], offsets: &[usize]) -> Result<Tensor> {
        if self.modality != Modality::Nlp {
            return Err(Error::Domain("pooled embeddings exist only for text models".into()));
        }
        let mut tape = Tape::new();
        let table = self.extractor.iter().find(|(n, _)| n == EMBEDDING).expect("text model has an embedding");
        let t = tape.input(table.1.shape(), table.1.data().to_vec(), false)?;
        let pooled = tape.embedding_mean(t, ids, offsets)?;
        Ok(tape.to_tensor(pooled))
    }

    /// Inference-only logits of one head.
    pub fn logits(&self, task_id: usize, input: &ModelInput) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, Trainable::NOTHING);
        let f = self.forward_features(&mut tape, &bound, input)?;
        let z = self.forward_head(&mut tape, &bound, task_id, f)?;
        Ok(tape.to_tensor(z))
    }

    /// Inference-only logits of all heads.
    pub fn all_logits(&self, input: &ModelInput) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, Trainable::NOTHING);
        let f = self.forward_features(&mut tape, &bound, input)?;
        let z = self.forward_all_heads(&mut tape, &bound, f)?;
        Ok(tape.to_tensor(z))
    }

    pub fn features(&self, input: &ModelInput) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, Trainable::NOTHING);
        let f = self.forward_features(&mut tape, &bound, input)?;
        Ok(tape.to_tensor(f))
    }
}

/// A frozen copy of the student with the newest head replaced by its
/// wake-phase weights. It exposes no mutable access.
#[derive(Debug, Clone)]
pub struct TeacherModel(ModelState);

impl TeacherModel {
    pub fn model(&self) -> &ModelState {
        &self.0
    }
}

/// Deep-copies `model` and installs `wake_head` as its newest head.
pub fn make_teacher(model: &ModelState, wake_head: &Head) -> Result<TeacherModel> {
    let newest = model.heads.last().ok_or_else(|| Error::Domain("model has no heads".into()))?;
    if newest.task_id != wake_head.task_id {
        return Err(Error::Domain(format!(
            "wake head belongs to task {} but the newest head is task {}",
            wake_head.task_id, newest.task_id
        )));
    }
    let mut teacher = model.clone();
    teacher.load_head(wake_head)?;
    Ok(TeacherModel(teacher))
}
