//! End-to-end experiment runs: load a benchmark, run the selected
//! strategies on the same split and seed, and write their artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{BenchmarkKind, ExperimentConfig, TextSource};
use crate::container::save_model;
use crate::data::{
    build_vocab, load_mnist_dir, load_text_csv, split_tasks, subsample, synthetic_text_corpus, Example, TaskSpec,
    TaskSplit,
};
use crate::engine::{run_strategy, RunOutput};
use crate::error::{Error, Result};
use crate::eval::{average_accuracy, evaluate_task};
use crate::memory::save_memory;
use crate::nn::ModelState;
use crate::report::{comparison_table, emit_accuracy_svg, emit_report, percent, RunLog};
use crate::rng::Rng;

/// Subdirectory of the data root holding the MNIST IDX files.
pub const MNIST_SUBDIR: &str = "mnist";
/// Subdirectory of the data root holding `train.csv` and `test.csv`.
pub const TEXT_SUBDIR: &str = "ag_news";

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub kind: BenchmarkKind,
    pub tasks: Vec<TaskSpec>,
    /// Zero for image benchmarks.
    pub vocab_size: usize,
    /// Human-readable origin of the data.
    pub source: String,
}

fn text_paths(root: &Path) -> (PathBuf, PathBuf) {
    let dir = root.join(TEXT_SUBDIR);
    (dir.join("train.csv"), dir.join("test.csv"))
}

/// Loads, subsamples and splits the configured benchmark. All randomness
/// comes from `rng`.
pub fn load_benchmark(cfg: &ExperimentConfig, rng: &mut Rng) -> Result<Benchmark> {
    let root = cfg.data_dir();
    let (per_train, per_test) = (cfg.per_class_train(), cfg.per_class_test());
    match cfg.benchmark {
        BenchmarkKind::SplitMnist => {
            let dir = root.join(MNIST_SUBDIR);
            let (train, test) = load_mnist_dir(&dir)?;
            let (train, test) = subsample(&train, &test, per_train, per_test, rng)?;
            let tasks = split_tasks(&train, &test, cfg.classes_per_task)?;
            Ok(Benchmark { kind: cfg.benchmark, tasks, vocab_size: 0, source: dir.display().to_string() })
        }
        BenchmarkKind::SplitText => {
            let (train_csv, test_csv) = text_paths(&root);
            let use_csv = match cfg.text_source {
                TextSource::Csv => true,
                TextSource::Synthetic => false,
                TextSource::Auto => train_csv.is_file() && test_csv.is_file(),
            };
            let (train, test, source) = if use_csv {
                let train = load_text_csv(&train_csv)?;
                let test = load_text_csv(&test_csv)?;
                (train, test, root.join(TEXT_SUBDIR).display().to_string())
            } else {
                let train = synthetic_text_corpus(per_train, rng);
                let test = synthetic_text_corpus(per_test, rng);
                (train, test, "synthetic".to_string())
            };
            let vocab = build_vocab(&train.texts, cfg.min_freq)?;
            let (train, test) = (train.encode(&vocab)?, test.encode(&vocab)?);
            let (train, test) = if use_csv { subsample(&train, &test, per_train, per_test, rng)? } else { (train, test) };
            let tasks = split_tasks(&train, &test, cfg.classes_per_task)?;
            Ok(Benchmark { kind: cfg.benchmark, tasks, vocab_size: vocab.len(), source })
        }
    }
}

/// Bytes needed to store a split as raw examples: one byte per pixel plus
/// a label byte for images, four bytes per token id plus a label byte for text.
pub fn raw_split_bytes(split: &TaskSplit) -> usize {
    split
        .examples
        .iter()
        .map(|e| match e {
            Example::Image(pixels) => pixels.len() + 1,
            Example::Tokens(ids) => 4 * ids.len() + 1,
        })
        .sum()
}

#[derive(Debug)]
pub struct Experiment {
    pub benchmark: Benchmark,
    pub outputs: Vec<RunOutput>,
}

impl Experiment {
    pub fn logs(&self) -> Vec<RunLog> {
        self.outputs.iter().map(|o| o.log.clone()).collect()
    }
}

/// The data and run generators derived from one seed.
pub fn seeded_streams(seed: u64) -> (Rng, Rng) {
    let mut root = Rng::new(seed);
    let data = root.fork();
    (data, root.fork())
}

/// The benchmark exactly as [`run_experiment`] sees it for this config.
pub fn load_seeded_benchmark(cfg: &ExperimentConfig) -> Result<Benchmark> {
    load_benchmark(cfg, &mut seeded_streams(cfg.seed).0)
}

/// Runs every selected strategy on one shared split. Each strategy starts
/// from an identical copy of the run generator.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    let (mut data_rng, run_rng) = seeded_streams(cfg.seed);
    let benchmark = load_benchmark(cfg, &mut data_rng)?;
    let protocol = cfg.protocol(benchmark.vocab_size);
    let mut outputs = Vec::new();
    for strategy in cfg.strategy.strategies() {
        let mut rng = run_rng.clone();
        let mut out = run_strategy(strategy, &benchmark.tasks, &protocol, &mut rng)?;
        out.log.seed = cfg.seed;
        out.log.config = cfg.to_map();
        outputs.push(out);
    }
    Ok(Experiment { benchmark, outputs })
}

pub fn model_path(out_dir: &Path, log: &RunLog) -> PathBuf {
    out_dir.join(log.strategy.as_str()).join("model.mygo")
}

pub fn memory_path(out_dir: &Path, log: &RunLog, task_id: usize) -> PathBuf {
    out_dir.join(log.strategy.as_str()).join("memories").join(format!("task_{task_id}.mygo"))
}

/// Writes per-strategy reports, the final model and every memory, plus a
/// comparison table and accuracy chart over all strategies.
pub fn write_experiment(exp: &Experiment, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for out in &exp.outputs {
        let dir = out_dir.join(out.log.strategy.as_str());
        written.extend(emit_report(&out.log, &dir)?);
        let path = model_path(out_dir, &out.log);
        save_model(&out.model, &path)?;
        written.push(path);
        for memory in &out.memories {
            let path = memory_path(out_dir, &out.log, memory.task_id);
            save_memory(memory, &path)?;
            written.push(path);
        }
    }
    let logs = exp.logs();
    let table = out_dir.join("comparison.txt");
    fs::write(&table, comparison_table(&logs)).map_err(|e| Error::io(&table, e))?;
    written.push(table);
    let svg = out_dir.join("accuracy.svg");
    emit_accuracy_svg(&logs, &svg)?;
    written.push(svg);
    Ok(written)
}

/// Accuracy of a saved model on every task it has a head for.
pub fn evaluate_model(model: &ModelState, benchmark: &Benchmark) -> Result<Vec<f64>> {
    if model.modality() != benchmark.tasks[0].train.modality {
        return Err(Error::Domain(format!(
            "model modality {:?} does not match benchmark {}",
            model.modality(),
            benchmark.kind.as_str()
        )));
    }
    if model.arch().vocab_size != benchmark.vocab_size {
        return Err(Error::Domain(format!(
            "model vocabulary has {} entries, benchmark has {}",
            model.arch().vocab_size,
            benchmark.vocab_size
        )));
    }
    let tasks: Vec<&TaskSpec> = benchmark.tasks.iter().filter(|t| model.has_head(t.task_id)).collect();
    if tasks.is_empty() {
        return Err(Error::Domain("model has no head for any benchmark task".into()));
    }
    tasks.into_iter().map(|t| evaluate_task(model, t)).collect()
}

/// One-row accuracy report for a saved model, in the `matrix.csv` layout.
pub fn eval_csv(accuracies: &[f64]) -> Result<String> {
    let avg = average_accuracy(accuracies)?;
    let header: Vec<String> = (1..=accuracies.len()).map(|t| format!("task_{t}")).collect();
    let cells: Vec<String> = accuracies.iter().map(|&a| percent(a)).collect();
    Ok(format!("after_task,{},average\n{},{},{}\n", header.join(","), accuracies.len(), cells.join(","), percent(avg)))
}
