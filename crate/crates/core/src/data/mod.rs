//! Datasets, sequential task splits, desk-scale subsampling and batching.

mod mnist;
mod synthetic;
mod text;

pub use mnist::{load_mnist_dir, load_mnist_idx, pixel_value, MNIST_CLASSES};
pub use synthetic::{synthetic_text_corpus, SYNTHETIC_CLASS_NAMES};
pub use text::{build_vocab, encode, load_text_csv, tokenize, TextCorpus, Vocab, AG_NEWS_CLASSES};

use crate::error::{Error, Result};
use crate::nn::{Modality, ModelInput, IMAGE_PIXELS};
use crate::rng::Rng;

/// One input. Images keep their raw bytes; scaling happens at batch time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Example {
    Image(Vec<u8>),
    Tokens(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct Dataset {
    modality: Modality,
    class_count: usize,
    examples: Vec<Example>,
    labels: Vec<usize>,
    class_index: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn new(modality: Modality, class_count: usize, examples: Vec<Example>, labels: Vec<usize>) -> Result<Self> {
        if examples.len() != labels.len() {
            return Err(Error::Data(format!("{} examples but {} labels", examples.len(), labels.len())));
        }
        let mut class_index = vec![Vec::new(); class_count];
        for (i, (x, &y)) in examples.iter().zip(&labels).enumerate() {
            if y >= class_count {
                return Err(Error::Data(format!("label {y} outside [0, {class_count})")));
            }
            match (modality, x) {
                (Modality::Cv, Example::Image(p)) if p.len() == IMAGE_PIXELS => {}
                (Modality::Nlp, Example::Tokens(_)) => {}
                _ => return Err(Error::Data(format!("example {i} does not match modality {}", modality.as_str()))),
            }
            class_index[y].push(i);
        }
        Ok(Self { modality, class_count, examples, labels, class_index })
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Indices of every example with global label `class`.
    pub fn class_indices(&self, class: usize) -> &[usize] {
        &self.class_index[class]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.class_index.iter().map(Vec::len).collect()
    }

    fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            modality: self.modality,
            class_count: self.class_count,
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_index: {
                let mut idx = vec![Vec::new(); self.class_count];
                for (j, &i) in indices.iter().enumerate() {
                    idx[self.labels[i]].push(j);
                }
                idx
            },
        }
    }

    /// Keeps `per_class` examples of every class, drawn uniformly without
    /// replacement. Original order is preserved among the survivors.
    pub fn subsample(&self, per_class: usize, rng: &mut Rng) -> Result<Dataset> {
        let mut keep = Vec::with_capacity(per_class * self.class_count);
        for (class, idx) in self.class_index.iter().enumerate() {
            if idx.len() < per_class {
                return Err(Error::Data(format!(
                    "class {class} has {} examples, {per_class} requested",
                    idx.len()
                )));
            }
            let mut pool = idx.clone();
            rng.shuffle(&mut pool);
            keep.extend_from_slice(&pool[..per_class]);
        }
        keep.sort_unstable();
        Ok(self.select(&keep))
    }
}

/// Subsamples a train/test pair with independent per-class quotas.
pub fn subsample(
    train: &Dataset,
    test: &Dataset,
    per_class_train: usize,
    per_class_test: usize,
    rng: &mut Rng,
) -> Result<(Dataset, Dataset)> {
    Ok((train.subsample(per_class_train, rng)?, test.subsample(per_class_test, rng)?))
}

/// Examples of one task in one split, with labels already in task-local form.
#[derive(Debug, Clone)]
pub struct TaskSplit {
    pub modality: Modality,
    pub examples: Vec<Example>,
    pub global_labels: Vec<usize>,
    pub local_labels: Vec<usize>,
}

impl TaskSplit {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// The whole split as a single input, in stored order.
    pub fn input(&self) -> ModelInput {
        let all: Vec<usize> = (0..self.len()).collect();
        make_input(self.modality, &self.examples, &all)
    }

    /// Consecutive chunks of at most `chunk` examples, in stored order.
    pub fn chunks(&self, chunk: usize) -> impl Iterator<Item = Batch> + '_ {
        let chunk = chunk.max(1);
        (0..self.len()).step_by(chunk).map(move |start| {
            let idx: Vec<usize> = (start..(start + chunk).min(self.len())).collect();
            self.batch(&idx)
        })
    }

    fn batch(&self, idx: &[usize]) -> Batch {
        Batch {
            input: make_input(self.modality, &self.examples, idx),
            labels: idx.iter().map(|&i| self.local_labels[i]).collect(),
            indices: idx.to_vec(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TaskSpec {
    /// 1-based.
    pub task_id: usize,
    /// Global labels in local-label order.
    pub classes: Vec<usize>,
    pub train: TaskSplit,
    pub test: TaskSplit,
}

impl TaskSpec {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn local_label(&self, global: usize) -> Option<usize> {
        self.classes.iter().position(|&c| c == global)
    }

    pub fn global_label(&self, local: usize) -> Option<usize> {
        self.classes.get(local).copied()
    }
}

fn task_split(data: &Dataset, classes: &[usize]) -> TaskSplit {
    let mut idx: Vec<usize> = classes.iter().flat_map(|&c| data.class_indices(c).iter().copied()).collect();
    idx.sort_unstable();
    TaskSplit {
        modality: data.modality,
        examples: idx.iter().map(|&i| data.examples[i].clone()).collect(),
        global_labels: idx.iter().map(|&i| data.labels[i]).collect(),
        local_labels: idx
            .iter()
            .map(|&i| classes.iter().position(|&c| c == data.labels[i]).expect("class in task"))
            .collect(),
    }
}

/// Partitions the label space into consecutive groups of `classes_per_task`
/// in ascending order, e.g. 10 classes by 2 gives {0,1}, {2,3}, ... {8,9}.
pub fn split_tasks(train: &Dataset, test: &Dataset, classes_per_task: usize) -> Result<Vec<TaskSpec>> {
    if train.modality != test.modality || train.class_count != test.class_count {
        return Err(Error::Data("train and test sets describe different label spaces".into()));
    }
    let k = train.class_count;
    if classes_per_task == 0 || k % classes_per_task != 0 {
        return Err(Error::Data(format!("{k} classes cannot be split into tasks of {classes_per_task}")));
    }
    Ok((0..k / classes_per_task)
        .map(|t| {
            let classes: Vec<usize> = (t * classes_per_task..(t + 1) * classes_per_task).collect();
            TaskSpec {
                task_id: t + 1,
                train: task_split(train, &classes),
                test: task_split(test, &classes),
                classes,
            }
        })
        .collect())
}

/// A minibatch with task-local labels. `indices` point into the source split.
#[derive(Debug, Clone)]
pub struct Batch {
    pub input: ModelInput,
    pub labels: Vec<usize>,
    pub indices: Vec<usize>,
}

fn make_input(modality: Modality, examples: &[Example], idx: &[usize]) -> ModelInput {
    match modality {
        Modality::Cv => {
            let mut pixels = Vec::with_capacity(idx.len() * IMAGE_PIXELS);
            for &i in idx {
                if let Example::Image(p) = &examples[i] {
                    pixels.extend(p.iter().map(|&b| pixel_value(b)));
                }
            }
            ModelInput::Images { pixels, count: idx.len() }
        }
        Modality::Nlp => {
            let mut ids = Vec::new();
            let mut offsets = Vec::with_capacity(idx.len());
            for &i in idx {
                offsets.push(ids.len());
                if let Example::Tokens(t) = &examples[i] {
                    ids.extend_from_slice(t);
                }
            }
            ModelInput::Tokens { ids, offsets }
        }
    }
}

/// One epoch of shuffled minibatches over `split`.
pub struct BatchIter<'a> {
    split: &'a TaskSplit,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    drop_last: bool,
}

pub fn batch_iter<'a>(split: &'a TaskSplit, batch_size: usize, rng: &mut Rng, drop_last: bool) -> Result<BatchIter<'a>> {
    if batch_size == 0 {
        return Err(Error::Data("batch size must be positive".into()));
    }
    Ok(BatchIter { split, order: rng.permutation(split.len()), pos: 0, batch_size, drop_last })
}

impl BatchIter<'_> {
    pub fn batch_count(&self) -> usize {
        let n = self.order.len();
        if self.drop_last {
            n / self.batch_size
        } else {
            n.div_ceil(self.batch_size)
        }
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        let remaining = self.order.len() - self.pos;
        if remaining == 0 || (self.drop_last && remaining < self.batch_size) {
            return None;
        }
        let end = self.pos + remaining.min(self.batch_size);
        let idx = &self.order[self.pos..end];
        self.pos = end;
        Some(self.split.batch(idx))
    }
}
