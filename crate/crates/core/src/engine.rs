//! The wake-sleep lifecycle and the sequential fine-tuning baseline.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::data::{batch_iter, TaskSplit, TaskSpec};
use crate::error::{Error, Result};
use crate::eval::{argmax, evaluate_task, AccuracyMatrix};
use crate::memory::{memory_footprint, select_memory, train_gan, DreamSource, GanCurves, GanTrainConfig, GenerativeMemory, MemoryModality};
use crate::nn::{make_teacher, ArchConfig, Head, HeadScope, Modality, ModelInput, ModelState, Trainable};
use crate::optim::{OptimizerKind, OptimizerState};
use crate::report::{Footprints, RunLog, StageCurves, StageRecord, StageTimings};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Mygo,
    Finetune,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Mygo => "mygo",
            StrategyKind::Finetune => "finetune",
        }
    }

    /// Row label in result tables.
    pub fn label(self) -> &'static str {
        match self {
            StrategyKind::Mygo => "MyGO",
            StrategyKind::Finetune => "Fine-tuning",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mygo" => Some(StrategyKind::Mygo),
            "finetune" => Some(StrategyKind::Finetune),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WakeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_fast: f64,
    pub optimizer: OptimizerKind,
}

impl Default for WakeConfig {
    fn default() -> Self {
        Self { epochs: 3, batch_size: 64, lr_fast: 1e-3, optimizer: OptimizerKind::adam() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SleepConfig {
    pub n_batches: usize,
    pub batch_size: usize,
    pub lr_slow: f64,
    pub optimizer: OptimizerKind,
}

/// Everything a strategy run needs besides the tasks and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub arch: ArchConfig,
    pub wake: WakeConfig,
    pub gan: GanTrainConfig,
    /// Sleep after stage `t` runs `t` times this many batches.
    pub sleep_batches_per_task: usize,
    pub sleep_batch_size: usize,
    pub lr_slow: f64,
    pub sleep_optimizer: OptimizerKind,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            arch: ArchConfig::default(),
            wake: WakeConfig::default(),
            gan: GanTrainConfig::default(),
            sleep_batches_per_task: 100,
            sleep_batch_size: 64,
            lr_slow: 1e-4,
            sleep_optimizer: OptimizerKind::adam(),
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_slow > 0.0 && self.lr_slow < self.wake.lr_fast) {
            return Err(Error::Config(format!(
                "lr_slow ({}) must be positive and below lr_fast ({})",
                self.lr_slow, self.wake.lr_fast
            )));
        }
        if self.wake.epochs == 0 || self.wake.batch_size == 0 || self.sleep_batch_size == 0 {
            return Err(Error::Config("epoch and batch counts must be positive".into()));
        }
        self.gan.validate()
    }

    pub fn sleep_config(&self, stage: usize) -> SleepConfig {
        SleepConfig {
            n_batches: self.sleep_batches_per_task * stage,
            batch_size: self.sleep_batch_size,
            lr_slow: self.lr_slow,
            optimizer: self.sleep_optimizer,
        }
    }
}

/// Per-step cross-entropy and per-epoch training accuracy of one head.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainCurve {
    pub loss: Vec<f64>,
    pub accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WakeResult {
    /// Snapshot of the freshly trained head.
    pub head_state: Head,
    pub memory: GenerativeMemory,
    pub wake_metrics: TrainCurve,
    pub gan_curves: GanCurves,
    pub head_ms: u64,
    pub gan_ms: u64,
}

fn elapsed_ms(since: Instant) -> u64 {
    since.elapsed().as_millis() as u64
}

fn train_supervised(
    model: &mut ModelState,
    split: &TaskSplit,
    task_id: usize,
    trainable: Trainable,
    cfg: &WakeConfig,
    rng: &mut Rng,
) -> Result<TrainCurve> {
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.lr_fast);
    let k = model.head(task_id)?.n_classes();
    let mut curve = TrainCurve::default();
    for epoch in 0..cfg.epochs {
        let mut correct = 0usize;
        for batch in batch_iter(split, cfg.batch_size, rng, false)? {
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, trainable);
            let f = model.forward_features(&mut tape, &bound, &batch.input)?;
            let z = model.forward_head(&mut tape, &bound, task_id, f)?;
            correct += tape.value(z).chunks_exact(k).zip(&batch.labels).filter(|(r, &y)| argmax(r) == y).count();
            let loss = tape.cross_entropy(z, &batch.labels)?;
            let value = tape.item(loss);
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("cross-entropy {value} on task {task_id}, epoch {epoch}")));
            }
            curve.loss.push(value);
            tape.backward(loss)?;
            model.collect_grads(&tape, &bound)?;
            opt.step(&mut model.trainable_params_mut(trainable))?;
        }
        curve.accuracy.push(correct as f64 / split.len() as f64);
    }
    Ok(curve)
}

/// Learns task `t`: a fresh head trains at the fast rate on top of the
/// frozen extractor, then a generative memory is fitted to the task. The
/// very first task also trains the extractor, and for text models the
/// embedding table is frozen once it has.
pub fn wake_phase(
    model: &mut ModelState,
    task: &TaskSpec,
    wake_cfg: &WakeConfig,
    gan_cfg: &GanTrainConfig,
    rng: &mut Rng,
) -> Result<WakeResult> {
    let t = task.task_id;
    if model.has_head(t) {
        return Err(Error::Domain(format!("task {t} has already been learned")));
    }
    if let Some(h) = model.heads().iter().find(|h| h.task_id >= t) {
        return Err(Error::Domain(format!("task {t} arrives after task {}", h.task_id)));
    }
    let first = model.heads().is_empty();
    model.add_head(t, task.n_classes(), rng)?;
    let trainable = if first { Trainable::extractor_and_head(t) } else { Trainable::head_only(t) };

    let start = Instant::now();
    let wake_metrics = train_supervised(model, &task.train, t, trainable, wake_cfg, rng)?;
    if first && model.modality() == Modality::Nlp {
        model.freeze_embedding();
    }
    let head_ms = elapsed_ms(start);

    let start = Instant::now();
    let (memory, gan_curves) = train_gan(task, model.modality(), model, gan_cfg, rng)?;
    let gan_ms = elapsed_ms(start);

    Ok(WakeResult { head_state: model.head(t)?.clone(), memory, wake_metrics, gan_curves, head_ms, gan_ms })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SleepOutcome {
    /// Distillation loss of every batch.
    pub loss: Vec<f64>,
    /// Task id of the memory dreamed from at every batch.
    pub selections: Vec<usize>,
}

/// Consolidates: a frozen teacher (the student with `wake_head` installed)
/// labels dreams with logits over every head, and the whole student is
/// pulled towards them by mean squared error at the slow rate. Dream
/// labels are not used.
pub fn sleep_phase<M: DreamSource>(
    student: &mut ModelState,
    wake_head: &Head,
    memories: &[M],
    cfg: &SleepConfig,
    rng: &mut Rng,
) -> Result<SleepOutcome> {
    if memories.is_empty() {
        return Err(Error::Domain("sleep needs at least one generative memory".into()));
    }
    let expected = MemoryModality::for_model(student.modality());
    if let Some(m) = memories.iter().find(|m| m.modality() != expected) {
        return Err(Error::Domain(format!(
            "memory for task {} holds {}, the model needs {}",
            m.task_id(),
            m.modality().as_str(),
            expected.as_str()
        )));
    }
    if !memories.iter().any(|m| m.task_id() == wake_head.task_id) {
        return Err(Error::Domain(format!("no memory for the newest task {}", wake_head.task_id)));
    }
    let teacher = make_teacher(student, wake_head)?;
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.lr_slow);
    let mut outcome = SleepOutcome::default();
    for step in 0..cfg.n_batches {
        let memory = select_memory(memories, rng)?;
        let dreams = memory.dream(cfg.batch_size, rng)?;
        let n = dreams.len();
        outcome.selections.push(memory.task_id());

        let mut tape = Tape::new();
        let (z_teacher, z_student, bound) = match dreams.modality {
            MemoryModality::CvPixels => {
                let input = ModelInput::Images { pixels: dreams.data.into_data(), count: n };
                let tb = teacher.model().bind(&mut tape, Trainable::NOTHING);
                let ft = teacher.model().forward_features(&mut tape, &tb, &input)?;
                let zt = teacher.model().forward_all_heads(&mut tape, &tb, ft)?;
                let bound = student.bind(&mut tape, Trainable::EVERYTHING);
                let fs = student.forward_features(&mut tape, &bound, &input)?;
                let zs = student.forward_all_heads(&mut tape, &bound, fs)?;
                (zt, zs, bound)
            }
            MemoryModality::NlpFeatures => {
                let shape = dreams.data.shape().to_vec();
                let pooled = tape.input(&shape, dreams.data.into_data(), false)?;
                let tb = teacher.model().bind(&mut tape, Trainable::NOTHING);
                let zt = teacher.model().forward_from_features(&mut tape, &tb, HeadScope::All, pooled)?;
                let bound = student.bind(&mut tape, Trainable::EVERYTHING);
                let zs = student.forward_from_features(&mut tape, &bound, HeadScope::All, pooled)?;
                (zt, zs, bound)
            }
        };
        let loss = tape.mse(z_student, z_teacher)?;
        let value = tape.item(loss);
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("distillation loss {value} at sleep batch {step}")));
        }
        outcome.loss.push(value);
        tape.backward(loss)?;
        student.collect_grads(&tape, &bound)?;
        opt.step(&mut student.trainable_params_mut(Trainable::EVERYTHING))?;
    }
    Ok(outcome)
}

/// Final state of a strategy run alongside its log.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: RunLog,
    pub model: ModelState,
    pub memories: Vec<GenerativeMemory>,
}

fn check_tasks(tasks: &[TaskSpec]) -> Result<Modality> {
    let first = tasks.first().ok_or_else(|| Error::Domain("no tasks to learn".into()))?;
    let mut seen = std::collections::BTreeSet::new();
    for t in tasks {
        if t.train.modality != first.train.modality {
            return Err(Error::Domain("tasks mix modalities".into()));
        }
        for &c in &t.classes {
            if !seen.insert(c) {
                return Err(Error::Domain(format!("class {c} appears in more than one task")));
            }
        }
    }
    Ok(first.train.modality)
}

fn evaluate_seen(model: &ModelState, seen: &[TaskSpec]) -> Result<Vec<f64>> {
    seen.iter().map(|t| evaluate_task(model, t)).collect()
}

fn new_log(strategy: StrategyKind, seed: u64) -> RunLog {
    RunLog {
        strategy,
        seed,
        config: BTreeMap::new(),
        matrix: AccuracyMatrix::new(),
        averages: Vec::new(),
        footprints_bytes: Footprints::default(),
        timings_ms: Vec::new(),
        loss_curves: Vec::new(),
        stages: Vec::new(),
    }
}

/// Wake then sleep on every task in order, evaluating all seen tasks after
/// each stage.
pub fn run_mygo(tasks: &[TaskSpec], cfg: &ProtocolConfig, rng: &mut Rng) -> Result<RunOutput> {
    cfg.validate()?;
    let modality = check_tasks(tasks)?;
    let mut log = new_log(StrategyKind::Mygo, rng.seed());
    let mut model = ModelState::new(modality, cfg.arch.clone(), rng)?;
    let mut memories: Vec<GenerativeMemory> = Vec::new();

    for (j, task) in tasks.iter().enumerate() {
        let stage = j + 1;
        let hash_before = model.extractor_hash();
        let wake = wake_phase(&mut model, task, &cfg.wake, &cfg.gan, rng)?;
        let hash_after = model.extractor_hash();
        memories.push(wake.memory.clone());

        let start = Instant::now();
        let sleep = sleep_phase(&mut model, &wake.head_state, &memories, &cfg.sleep_config(stage), rng)?;
        let sleep_ms = elapsed_ms(start);

        let start = Instant::now();
        log.matrix.push_row(evaluate_seen(&model, &tasks[..=j])?)?;
        let eval_ms = elapsed_ms(start);

        let selections = memories
            .iter()
            .map(|m| sleep.selections.iter().filter(|&&s| s == m.task_id).count())
            .collect();
        log.stages.push(StageRecord {
            task_id: task.task_id,
            extractor_hash_before_wake: hash_before,
            extractor_hash_after_wake: hash_after,
            extractor_hash_after_stage: model.extractor_hash(),
            sleep_selections: selections,
        });
        log.timings_ms.push(StageTimings { task_id: task.task_id, train_ms: wake.head_ms, gan_ms: wake.gan_ms, sleep_ms, eval_ms });
        log.loss_curves.push(StageCurves {
            task_id: task.task_id,
            train: wake.wake_metrics,
            gan_discriminator: wake.gan_curves.discriminator,
            gan_generator: wake.gan_curves.generator,
            sleep: sleep.loss,
        });
    }
    log.averages = log.matrix.averages();
    log.footprints_bytes = Footprints {
        model: crate::container::model_footprint(&model),
        memories: memories.iter().map(memory_footprint).collect(),
    };
    Ok(RunOutput { log, model, memories })
}

/// Sequential fine-tuning: a new head per task, trained together with the
/// extractor on the current task only.
pub fn run_finetune(tasks: &[TaskSpec], cfg: &ProtocolConfig, rng: &mut Rng) -> Result<RunOutput> {
    cfg.validate()?;
    let modality = check_tasks(tasks)?;
    let mut log = new_log(StrategyKind::Finetune, rng.seed());
    let mut model = ModelState::new(modality, cfg.arch.clone(), rng)?;

    for (j, task) in tasks.iter().enumerate() {
        let t = task.task_id;
        if model.has_head(t) {
            return Err(Error::Domain(format!("task {t} has already been learned")));
        }
        let hash_before = model.extractor_hash();
        model.add_head(t, task.n_classes(), rng)?;
        let start = Instant::now();
        let curve = train_supervised(&mut model, &task.train, t, Trainable::extractor_and_head(t), &cfg.wake, rng)?;
        let train_ms = elapsed_ms(start);

        let start = Instant::now();
        log.matrix.push_row(evaluate_seen(&model, &tasks[..=j])?)?;
        let eval_ms = elapsed_ms(start);

        let hash_after = model.extractor_hash();
        log.stages.push(StageRecord {
            task_id: t,
            extractor_hash_before_wake: hash_before,
            extractor_hash_after_wake: hash_after.clone(),
            extractor_hash_after_stage: hash_after,
            sleep_selections: Vec::new(),
        });
        log.timings_ms.push(StageTimings { task_id: t, train_ms, gan_ms: 0, sleep_ms: 0, eval_ms });
        log.loss_curves.push(StageCurves { task_id: t, train: curve, ..StageCurves::default() });
    }
    log.averages = log.matrix.averages();
    log.footprints_bytes = Footprints { model: crate::container::model_footprint(&model), memories: Vec::new() };
    Ok(RunOutput { log, model, memories: Vec::new() })
}

pub fn run_strategy(strategy: StrategyKind, tasks: &[TaskSpec], cfg: &ProtocolConfig, rng: &mut Rng) -> Result<RunOutput> {
    match strategy {
        StrategyKind::Mygo => run_mygo(tasks, cfg, rng),
        StrategyKind::Finetune => run_finetune(tasks, cfg, rng),
    }
}
