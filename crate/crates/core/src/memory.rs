//! Per-task conditional GAN memories: training, sampling, persistence.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autograd::{Activation, Tape};
use crate::container::{Container, ContainerKind};
use crate::data::{batch_iter, TaskSpec};
use crate::error::{Error, Result};
use crate::nn::{DiscriminatorNet, GeneratorNet, Mlp, Modality, ModelInput, ModelState, IMAGE_PIXELS, IMAGE_SIDE};
use crate::optim::{OptimizerKind, OptimizerState};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// What a memory's samples live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryModality {
    /// 28×28 images in `[−1, 1]`.
    CvPixels,
    /// Pooled embedding vectors of the text extractor.
    NlpFeatures,
}

impl MemoryModality {
    pub fn for_model(modality: Modality) -> Self {
        match modality {
            Modality::Cv => MemoryModality::CvPixels,
            Modality::Nlp => MemoryModality::NlpFeatures,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MemoryModality::CvPixels => "cv_pixels",
            MemoryModality::NlpFeatures => "nlp_features",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cv_pixels" => Some(MemoryModality::CvPixels),
            "nlp_features" => Some(MemoryModality::NlpFeatures),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub latent_dim: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Real targets become 0.9 instead of 1 in the discriminator loss.
    pub label_smoothing: bool,
    /// Real samples paired with a wrong class also count as fake for the
    /// discriminator, which then cannot ignore the condition. The fake and
    /// mismatched terms are averaged.
    pub mismatch_negatives: bool,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            latent_dim: 64,
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            label_smoothing: true,
            mismatch_negatives: true,
            generator_hidden: vec![128, 64],
            discriminator_hidden: vec![512, 256],
        }
    }
}

impl GanTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.epochs > 0
            && self.batch_size > 0
            && self.latent_dim > 0
            && self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && !self.generator_hidden.contains(&0)
            && !self.discriminator_hidden.contains(&0);
        if positive {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid GAN settings {self:?}")))
        }
    }
}

/// A trained generator and the task it remembers. The discriminator is
/// not kept.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeMemory {
    pub task_id: usize,
    /// Global class ids in local-label order.
    pub class_list: Vec<usize>,
    pub modality: MemoryModality,
    pub generator: GeneratorNet,
    /// Position in the task sequence when the memory was trained.
    pub created_at_step: usize,
}

impl GenerativeMemory {
    pub fn latent_dim(&self) -> usize {
        self.generator.latent_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.generator.output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.generator.mlp().param_count()
    }

    pub fn expect_modality(&self, modality: MemoryModality) -> Result<()> {
        if self.modality == modality {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "memory for task {} holds {} samples, expected {}",
                self.task_id,
                self.modality.as_str(),
                modality.as_str()
            )))
        }
    }
}

/// Per-step losses recorded while training one memory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GanCurves {
    pub discriminator: Vec<f64>,
    pub generator: Vec<f64>,
}

fn onehot(labels: &[usize], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; labels.len() * k];
    for (row, &y) in labels.iter().enumerate() {
        out[row * k + y] = 1.0;
    }
    out
}

fn real_rows(model: &ModelState, input: &ModelInput) -> Result<Vec<f64>> {
    match input {
        ModelInput::Images { pixels, .. } => Ok(pixels.clone()),
        ModelInput::Tokens { ids, offsets } => Ok(model.pooled_embeddings(ids, offsets)?.into_data()),
    }
}

fn finite(loss: f64, what: &str, task: usize, epoch: usize, step: usize) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFinite(format!("{what} loss {loss} for task {task} at epoch {epoch}, step {step}")))
    }
}

/// Adversarially trains a conditional generator on one task's training
/// split. Text tasks are modelled in the pooled-embedding space of `model`,
/// which is only read.
pub fn train_gan(
    task: &TaskSpec,
    modality: Modality,
    model: &ModelState,
    cfg: &GanTrainConfig,
    rng: &mut Rng,
) -> Result<(GenerativeMemory, GanCurves)> {
    cfg.validate()?;
    if task.train.modality != modality || model.modality() != modality {
        return Err(Error::Domain("task, model and requested modality disagree".into()));
    }
    let k = task.n_classes();
    for local in 0..k {
        let n = task.train.local_labels.iter().filter(|&&y| y == local).count();
        if n < 2 {
            return Err(Error::Data(format!("class {} of task {} has {n} training examples", task.classes[local], task.task_id)));
        }
    }
    let mem_modality = MemoryModality::for_model(modality);
    let (dim, bounded) = match mem_modality {
        MemoryModality::CvPixels => (IMAGE_PIXELS, true),
        MemoryModality::NlpFeatures => (model.arch().embed_dim, false),
    };
    let mut generator = GeneratorNet::new(cfg.latent_dim, k, &cfg.generator_hidden, dim, bounded, rng)?;
    let mut disc = DiscriminatorNet::new(dim, k, &cfg.discriminator_hidden, rng)?;
    let kind = OptimizerKind::Adam { beta1: cfg.beta1, beta2: cfg.beta2, eps: 1e-8 };
    let mut g_opt = OptimizerState::new(kind, cfg.learning_rate);
    let mut d_opt = OptimizerState::new(kind, cfg.learning_rate);
    let real_target = if cfg.label_smoothing { 0.9 } else { 1.0 };
    let mut curves = GanCurves::default();

    for epoch in 0..cfg.epochs {
        let batches = batch_iter(&task.train, cfg.batch_size, rng, false)?.collect::<Vec<_>>();
        for (step, batch) in batches.into_iter().enumerate() {
            let n = batch.labels.len();
            let cond = onehot(&batch.labels, k);
            let real = real_rows(model, &batch.input)?;

            let fake = generator.generate(rng.normals(n * cfg.latent_dim), cond.clone(), n)?;
            let mut tape = Tape::new();
            let d_vars = disc.mlp().bind(&mut tape, true);
            let c = tape.input(&[n, k], cond.clone(), false)?;
            let x_real = tape.input(&[n, dim], real, false)?;
            let x_fake = tape.input(&[n, dim], fake.into_data(), false)?;
            let p_real = disc.forward(&mut tape, &d_vars, x_real, c)?;
            let p_fake = disc.forward(&mut tape, &d_vars, x_fake, c)?;
            let l_real = tape.bce(p_real, &vec![real_target; n])?;
            let l_fake = tape.bce(p_fake, &vec![0.0; n])?;
            let d_loss = if cfg.mismatch_negatives {
                let wrong: Vec<usize> = batch.labels.iter().map(|&y| (y + 1 + rng.below(k - 1)) % k).collect();
                let c_wrong = tape.input(&[n, k], onehot(&wrong, k), false)?;
                let p_wrong = disc.forward(&mut tape, &d_vars, x_real, c_wrong)?;
                let l_wrong = tape.bce(p_wrong, &vec![0.0; n])?;
                let negatives = tape.add(l_fake, l_wrong)?;
                let negatives = tape.scale(negatives, 0.5);
                tape.add(l_real, negatives)?
            } else {
                tape.add(l_real, l_fake)?
            };
            curves.discriminator.push(finite(tape.item(d_loss), "discriminator", task.task_id, epoch, step)?);
            tape.backward(d_loss)?;
            disc.mlp_mut().collect_grads(&tape, &d_vars)?;
            d_opt.step(&mut disc.mlp_mut().params_mut())?;

            let mut tape = Tape::new();
            let g_vars = generator.mlp().bind(&mut tape, true);
            let d_vars = disc.mlp().bind(&mut tape, false);
            let z = tape.input(&[n, cfg.latent_dim], rng.normals(n * cfg.latent_dim), false)?;
            let c = tape.input(&[n, k], cond, false)?;
            let x = generator.forward(&mut tape, &g_vars, z, c)?;
            let p = disc.forward(&mut tape, &d_vars, x, c)?;
            let g_loss = tape.bce(p, &vec![1.0; n])?;
            curves.generator.push(finite(tape.item(g_loss), "generator", task.task_id, epoch, step)?);
            tape.backward(g_loss)?;
            generator.mlp_mut().collect_grads(&tape, &g_vars)?;
            g_opt.step(&mut generator.mlp_mut().params_mut())?;
        }
    }

    let memory = GenerativeMemory {
        task_id: task.task_id,
        class_list: task.classes.clone(),
        modality: mem_modality,
        generator,
        created_at_step: task.task_id,
    };
    Ok((memory, curves))
}

/// A batch of generated samples with the local labels they were
/// conditioned on.
#[derive(Debug, Clone, PartialEq)]
pub struct Dreams {
    pub task_id: usize,
    pub modality: MemoryModality,
    /// `n × 1 × 28 × 28` for pixels, `n × embed_dim` for features.
    pub data: Tensor,
    pub local_labels: Vec<usize>,
}

impl Dreams {
    pub fn len(&self) -> usize {
        self.local_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local_labels.is_empty()
    }
}

/// Draws `n` samples with `z ~ N(0, 1)` and labels uniform over the task's
/// classes, or all equal to `class_filter` (a global class id).
pub fn sample_dreams(memory: &GenerativeMemory, n: usize, rng: &mut Rng, class_filter: Option<usize>) -> Result<Dreams> {
    if n == 0 {
        return Err(Error::Domain("asked for zero dreams".into()));
    }
    let k = memory.class_list.len();
    let fixed = match class_filter {
        None => None,
        Some(c) => Some(memory.class_list.iter().position(|&g| g == c).ok_or_else(|| {
            Error::Domain(format!("class {c} is not one of task {}'s classes {:?}", memory.task_id, memory.class_list))
        })?),
    };
    let labels: Vec<usize> = (0..n).map(|_| fixed.unwrap_or_else(|| rng.below(k))).collect();
    let z = rng.normals(n * memory.latent_dim());
    let out = memory.generator.generate(z, onehot(&labels, k), n)?;
    let data = match memory.modality {
        MemoryModality::CvPixels => out.reshape(&[n, 1, IMAGE_SIDE, IMAGE_SIDE])?,
        MemoryModality::NlpFeatures => out,
    };
    Ok(Dreams { task_id: memory.task_id, modality: memory.modality, data, local_labels: labels })
}

/// Anything sleep can dream from.
pub trait DreamSource {
    fn task_id(&self) -> usize;
    fn modality(&self) -> MemoryModality;
    fn dream(&self, n: usize, rng: &mut Rng) -> Result<Dreams>;
}

impl DreamSource for GenerativeMemory {
    fn task_id(&self) -> usize {
        self.task_id
    }

    fn modality(&self) -> MemoryModality {
        self.modality
    }

    fn dream(&self, n: usize, rng: &mut Rng) -> Result<Dreams> {
        sample_dreams(self, n, rng, None)
    }
}

/// Uniform choice among the stored memories.
pub fn select_memory<'a, M>(memories: &'a [M], rng: &mut Rng) -> Result<&'a M> {
    if memories.is_empty() {
        return Err(Error::Domain("no generative memories to dream from".into()));
    }
    Ok(&memories[rng.below(memories.len())])
}

fn memory_container(memory: &GenerativeMemory) -> Container {
    let mut c = Container::new(ContainerKind::Memory);
    let classes: Vec<String> = memory.class_list.iter().map(usize::to_string).collect();
    c.meta("task_id", memory.task_id)
        .meta("class_list", classes.join(","))
        .meta("modality", memory.modality.as_str())
        .meta("latent_dim", memory.latent_dim())
        .meta("output_dim", memory.output_dim())
        .meta("layers", memory.generator.mlp().layers().len())
        .meta("created_at_step", memory.created_at_step);
    for (name, t) in memory.generator.mlp().named_params("generator") {
        c.tensors.push((name, t.clone()));
    }
    c
}

/// Serialized size in bytes, computed without writing.
pub fn memory_footprint(memory: &GenerativeMemory) -> usize {
    memory_container(memory).encoded_len()
}

pub fn save_memory(memory: &GenerativeMemory, path: &Path) -> Result<()> {
    memory_container(memory).write(path)
}

pub fn load_memory(path: &Path) -> Result<GenerativeMemory> {
    decode_memory(Container::read(path)?)
}

pub fn decode_memory(mut c: Container) -> Result<GenerativeMemory> {
    if c.kind != ContainerKind::Memory {
        return Err(Error::Format("container holds a model, not a generative memory".into()));
    }
    let modality = MemoryModality::parse(c.get("modality")?)
        .ok_or_else(|| Error::Format(format!("unknown memory modality {:?}", c.get("modality"))))?;
    let class_list = c
        .get("class_list")?
        .split(',')
        .map(|s| s.parse().map_err(|_| Error::Format(format!("bad class id {s:?}"))))
        .collect::<Result<Vec<usize>>>()?;
    let latent_dim: usize = c.get_parsed("latent_dim")?;
    let output_dim: usize = c.get_parsed("output_dim")?;
    let n_layers: usize = c.get_parsed("layers")?;
    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let w = c.take_tensor(&format!("generator.{i}.weight"))?;
        let b = c.take_tensor(&format!("generator.{i}.bias"))?;
        layers.push((w, b));
    }
    if !c.tensors.is_empty() {
        return Err(Error::Format(format!("unexpected tensor {:?} in memory", c.tensors[0].0)));
    }
    let output = (modality == MemoryModality::CvPixels).then_some(Activation::Tanh);
    let mlp = Mlp::from_layers(layers, Activation::LeakyRelu, output)?;
    let generator = GeneratorNet::from_mlp(latent_dim, class_list.len(), mlp)?;
    if generator.output_dim() != output_dim {
        return Err(Error::Format(format!("generator emits {} values, header says {output_dim}", generator.output_dim())));
    }
    Ok(GenerativeMemory {
        task_id: c.get_parsed("task_id")?,
        class_list,
        modality,
        generator,
        created_at_step: c.get_parsed("created_at_step")?,
    })
}
