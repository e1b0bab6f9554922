//! Flat `key = value` experiment configuration.
//!
//! Blank lines and text after `#` are ignored. Every key is optional;
//! absent keys take the defaults below. Errors name the line (or the
//! `--set` override) they come from.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::engine::{ProtocolConfig, StrategyKind, WakeConfig};
use crate::error::{Error, Result};
use crate::memory::GanTrainConfig;
use crate::nn::ArchConfig;
use crate::optim::OptimizerKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkKind {
    SplitMnist,
    SplitText,
}

impl BenchmarkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkKind::SplitMnist => "split_mnist",
            BenchmarkKind::SplitText => "split_text",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "split_mnist" => Some(BenchmarkKind::SplitMnist),
            "split_text" => Some(BenchmarkKind::SplitText),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyChoice {
    Mygo,
    Finetune,
    Both,
}

impl StrategyChoice {
    pub fn strategies(self) -> Vec<StrategyKind> {
        match self {
            StrategyChoice::Mygo => vec![StrategyKind::Mygo],
            StrategyChoice::Finetune => vec![StrategyKind::Finetune],
            StrategyChoice::Both => vec![StrategyKind::Mygo, StrategyKind::Finetune],
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            StrategyChoice::Mygo => "mygo",
            StrategyChoice::Finetune => "finetune",
            StrategyChoice::Both => "both",
        }
    }
}

/// Where the text benchmark comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextSource {
    /// CSV files if present under `<data_dir>/ag_news`, else synthetic.
    Auto,
    Csv,
    Synthetic,
}

impl TextSource {
    fn as_str(self) -> &'static str {
        match self {
            TextSource::Auto => "auto",
            TextSource::Csv => "csv",
            TextSource::Synthetic => "synthetic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkKind,
    pub strategy: StrategyChoice,
    pub seed: u64,
    /// `None` defers to `MYGO_DATA_DIR`, then `./data`.
    pub data_dir: Option<PathBuf>,
    pub text_source: TextSource,
    pub min_freq: usize,
    /// `None` means 500 for both benchmarks.
    pub per_class_train: Option<usize>,
    /// `None` means 250 for MNIST and 200 for text.
    pub per_class_test: Option<usize>,
    pub classes_per_task: usize,
    pub out_dir: PathBuf,
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub lr_fast: f64,
    pub lr_slow: f64,
    pub wake_epochs: usize,
    pub batch_size: usize,
    pub gan_epochs: usize,
    pub gan_batch_size: usize,
    pub latent_dim: usize,
    pub gan_lr: f64,
    pub gan_beta1: f64,
    pub label_smoothing: bool,
    pub mismatch_negatives: bool,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub sleep_batches_per_task: usize,
    pub sleep_batch_size: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let gan = GanTrainConfig::default();
        let arch = ArchConfig::default();
        Self {
            benchmark: BenchmarkKind::SplitMnist,
            strategy: StrategyChoice::Both,
            seed: 42,
            data_dir: None,
            text_source: TextSource::Auto,
            min_freq: 2,
            per_class_train: None,
            per_class_test: None,
            classes_per_task: 2,
            out_dir: PathBuf::from("runs/latest"),
            feature_dim: arch.feature_dim,
            embed_dim: arch.embed_dim,
            lr_fast: 1e-3,
            lr_slow: 1e-4,
            wake_epochs: 3,
            batch_size: 64,
            gan_epochs: gan.epochs,
            gan_batch_size: gan.batch_size,
            latent_dim: gan.latent_dim,
            gan_lr: gan.learning_rate,
            gan_beta1: gan.beta1,
            label_smoothing: gan.label_smoothing,
            mismatch_negatives: gan.mismatch_negatives,
            generator_hidden: gan.generator_hidden,
            discriminator_hidden: gan.discriminator_hidden,
            sleep_batches_per_task: 100,
            sleep_batch_size: 64,
        }
    }
}

/// Where a setting came from, for error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Default,
    Line(usize),
    Override(String),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => write!(f, "default"),
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Override(s) => write!(f, "--set {s}"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, what: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("expected {what}, found {value:?}"))
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected true or false, found {value:?}")),
    }
}

fn parse_widths(value: &str) -> std::result::Result<Vec<usize>, String> {
    value
        .split(',')
        .map(|w| w.trim().parse().map_err(|_| format!("expected comma-separated widths, found {value:?}")))
        .collect()
}

fn join(widths: &[usize]) -> String {
    widths.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

pub const KEYS: &[&str] = &[
    "benchmark",
    "strategy",
    "seed",
    "data_dir",
    "text_source",
    "min_freq",
    "per_class_train",
    "per_class_test",
    "classes_per_task",
    "out_dir",
    "feature_dim",
    "embed_dim",
    "lr_fast",
    "lr_slow",
    "wake_epochs",
    "batch_size",
    "gan_epochs",
    "gan_batch_size",
    "latent_dim",
    "gan_lr",
    "gan_beta1",
    "label_smoothing",
    "mismatch_negatives",
    "generator_hidden",
    "discriminator_hidden",
    "sleep_batches_per_task",
    "sleep_batch_size",
];

impl ExperimentConfig {
    fn apply(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "benchmark" => {
                self.benchmark = BenchmarkKind::parse(value)
                    .ok_or_else(|| format!("expected split_mnist or split_text, found {value:?}"))?
            }
            "strategy" => {
                self.strategy = match value {
                    "mygo" => StrategyChoice::Mygo,
                    "finetune" => StrategyChoice::Finetune,
                    "both" => StrategyChoice::Both,
                    _ => return Err(format!("expected mygo, finetune or both, found {value:?}")),
                }
            }
            "seed" => self.seed = parse_num(value, "an unsigned integer")?,
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "text_source" => {
                self.text_source = match value {
                    "auto" => TextSource::Auto,
                    "csv" => TextSource::Csv,
                    "synthetic" => TextSource::Synthetic,
                    _ => return Err(format!("expected auto, csv or synthetic, found {value:?}")),
                }
            }
            "min_freq" => self.min_freq = parse_num(value, "an integer")?,
            "per_class_train" => self.per_class_train = Some(parse_num(value, "an integer")?),
            "per_class_test" => self.per_class_test = Some(parse_num(value, "an integer")?),
            "classes_per_task" => self.classes_per_task = parse_num(value, "an integer")?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "feature_dim" => self.feature_dim = parse_num(value, "an integer")?,
            "embed_dim" => self.embed_dim = parse_num(value, "an integer")?,
            "lr_fast" => self.lr_fast = parse_num(value, "a number")?,
            "lr_slow" => self.lr_slow = parse_num(value, "a number")?,
            "wake_epochs" => self.wake_epochs = parse_num(value, "an integer")?,
            "batch_size" => self.batch_size = parse_num(value, "an integer")?,
            "gan_epochs" => self.gan_epochs = parse_num(value, "an integer")?,
            "gan_batch_size" => self.gan_batch_size = parse_num(value, "an integer")?,
            "latent_dim" => self.latent_dim = parse_num(value, "an integer")?,
            "gan_lr" => self.gan_lr = parse_num(value, "a number")?,
            "gan_beta1" => self.gan_beta1 = parse_num(value, "a number")?,
            "label_smoothing" => self.label_smoothing = parse_bool(value)?,
            "mismatch_negatives" => self.mismatch_negatives = parse_bool(value)?,
            "generator_hidden" => self.generator_hidden = parse_widths(value)?,
            "discriminator_hidden" => self.discriminator_hidden = parse_widths(value)?,
            "sleep_batches_per_task" => self.sleep_batches_per_task = parse_num(value, "an integer")?,
            "sleep_batch_size" => self.sleep_batch_size = parse_num(value, "an integer")?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Parses config text, applies `key=value` overrides, then validates.
    pub fn from_text(text: &str, overrides: &[String]) -> Result<Self> {
        let mut cfg = Self::default();
        let mut origins: BTreeMap<String, Origin> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line_no}: expected `key = value`, found {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(prev) = origins.get(key) {
                return Err(Error::Config(format!("line {line_no}: `{key}` already set on {prev}")));
            }
            cfg.apply(key, value).map_err(|e| Error::Config(format!("line {line_no}: {e}")))?;
            origins.insert(key.to_string(), Origin::Line(line_no));
        }
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set {o}: expected key=value")))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.apply(key, value).map_err(|e| Error::Config(format!("--set {o}: {e}")))?;
            origins.insert(key.to_string(), Origin::Override(o.clone()));
        }
        cfg.validate(&origins)?;
        Ok(cfg)
    }

    fn validate(&self, origins: &BTreeMap<String, Origin>) -> Result<()> {
        let at = |key: &str| origins.get(key).cloned().unwrap_or(Origin::Default);
        let fail = |key: &str, msg: String| Err(Error::Config(format!("{}: {msg}", at(key))));
        if !(self.lr_fast > 0.0) {
            return fail("lr_fast", format!("lr_fast must be positive, found {}", self.lr_fast));
        }
        if !(self.lr_slow > 0.0 && self.lr_slow < self.lr_fast) {
            let key = if origins.contains_key("lr_slow") { "lr_slow" } else { "lr_fast" };
            return fail(key, format!("lr_slow ({}) must be positive and below lr_fast ({})", self.lr_slow, self.lr_fast));
        }
        if !(self.gan_lr > 0.0) {
            return fail("gan_lr", format!("gan_lr must be positive, found {}", self.gan_lr));
        }
        if !(0.0..1.0).contains(&self.gan_beta1) {
            return fail("gan_beta1", format!("gan_beta1 must lie in [0, 1), found {}", self.gan_beta1));
        }
        let counts = [
            ("per_class_train", self.per_class_train.unwrap_or(1)),
            ("per_class_test", self.per_class_test.unwrap_or(1)),
            ("classes_per_task", self.classes_per_task),
            ("feature_dim", self.feature_dim),
            ("embed_dim", self.embed_dim),
            ("wake_epochs", self.wake_epochs),
            ("batch_size", self.batch_size),
            ("gan_epochs", self.gan_epochs),
            ("gan_batch_size", self.gan_batch_size),
            ("latent_dim", self.latent_dim),
            ("min_freq", self.min_freq),
            ("sleep_batch_size", self.sleep_batch_size),
        ];
        for (key, v) in counts {
            if v == 0 {
                return fail(key, format!("{key} must be positive"));
            }
        }
        for (key, widths) in [("generator_hidden", &self.generator_hidden), ("discriminator_hidden", &self.discriminator_hidden)] {
            if widths.is_empty() || widths.contains(&0) {
                return fail(key, format!("{key} needs positive widths"));
            }
        }
        Ok(())
    }

    pub fn per_class_train(&self) -> usize {
        self.per_class_train.unwrap_or(500)
    }

    pub fn per_class_test(&self) -> usize {
        self.per_class_test.unwrap_or(match self.benchmark {
            BenchmarkKind::SplitMnist => 250,
            BenchmarkKind::SplitText => 200,
        })
    }

    /// The configured data root, else `MYGO_DATA_DIR`, else `./data`.
    pub fn data_dir(&self) -> PathBuf {
        self.data_dir
            .clone()
            .or_else(|| std::env::var_os("MYGO_DATA_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"))
    }

    pub fn gan(&self) -> GanTrainConfig {
        GanTrainConfig {
            epochs: self.gan_epochs,
            batch_size: self.gan_batch_size,
            latent_dim: self.latent_dim,
            learning_rate: self.gan_lr,
            beta1: self.gan_beta1,
            label_smoothing: self.label_smoothing,
            mismatch_negatives: self.mismatch_negatives,
            generator_hidden: self.generator_hidden.clone(),
            discriminator_hidden: self.discriminator_hidden.clone(),
            ..GanTrainConfig::default()
        }
    }

    /// Training settings; `vocab_size` is 0 for image benchmarks.
    pub fn protocol(&self, vocab_size: usize) -> ProtocolConfig {
        ProtocolConfig {
            arch: ArchConfig { feature_dim: self.feature_dim, embed_dim: self.embed_dim, vocab_size, ..ArchConfig::default() },
            wake: WakeConfig { epochs: self.wake_epochs, batch_size: self.batch_size, lr_fast: self.lr_fast, optimizer: OptimizerKind::adam() },
            gan: self.gan(),
            sleep_batches_per_task: self.sleep_batches_per_task,
            sleep_batch_size: self.sleep_batch_size,
            lr_slow: self.lr_slow,
            sleep_optimizer: OptimizerKind::adam(),
        }
    }

    /// Fully resolved settings, as recorded in run reports.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let pairs: Vec<(&str, String)> = vec![
            ("benchmark", self.benchmark.as_str().into()),
            ("strategy", self.strategy.as_str().into()),
            ("seed", self.seed.to_string()),
            ("data_dir", self.data_dir().display().to_string()),
            ("text_source", self.text_source.as_str().into()),
            ("min_freq", self.min_freq.to_string()),
            ("per_class_train", self.per_class_train().to_string()),
            ("per_class_test", self.per_class_test().to_string()),
            ("classes_per_task", self.classes_per_task.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("feature_dim", self.feature_dim.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("lr_fast", self.lr_fast.to_string()),
            ("lr_slow", self.lr_slow.to_string()),
            ("wake_epochs", self.wake_epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("gan_epochs", self.gan_epochs.to_string()),
            ("gan_batch_size", self.gan_batch_size.to_string()),
            ("latent_dim", self.latent_dim.to_string()),
            ("gan_lr", self.gan_lr.to_string()),
            ("gan_beta1", self.gan_beta1.to_string()),
            ("label_smoothing", self.label_smoothing.to_string()),
            ("mismatch_negatives", self.mismatch_negatives.to_string()),
            ("generator_hidden", join(&self.generator_hidden)),
            ("discriminator_hidden", join(&self.discriminator_hidden)),
            ("sleep_batches_per_task", self.sleep_batches_per_task.to_string()),
            ("sleep_batch_size", self.sleep_batch_size.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config_with(path, &[])
}

pub fn parse_config_with(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_text(&text, overrides).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(ExperimentConfig::from_text("", &[]).unwrap(), ExperimentConfig::default());
        assert_eq!(ExperimentConfig::from_text("# nothing\n\n", &[]).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn values_parse() {
        let cfg = ExperimentConfig::from_text("lr_fast = 0.001\nbenchmark = split_text # text\ngenerator_hidden = 32, 16\n", &[]).unwrap();
        assert_eq!(cfg.lr_fast, 1e-3);
        assert_eq!(cfg.benchmark, BenchmarkKind::SplitText);
        assert_eq!(cfg.generator_hidden, vec![32, 16]);
        assert_eq!(cfg.per_class_test(), 200);
    }

    #[test]
    fn errors_name_the_line() {
        let err = ExperimentConfig::from_text("seed = 1\nbogus = 3\n", &[]).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("bogus"), "{err}");
        let err = ExperimentConfig::from_text("seed = x\n", &[]).unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
        let err = ExperimentConfig::from_text("lr_fast = 0.001\nlr_slow = 0.01\n", &[]).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("lr_slow"), "{err}");
        let err = ExperimentConfig::from_text("seed = 1\nseed = 2\n", &[]).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(ExperimentConfig::from_text("no equals sign\n", &[]).is_err());
    }

    #[test]
    fn overrides_apply_before_validation() {
        let cfg = ExperimentConfig::from_text("strategy = mygo\n", &["strategy=both".into()]).unwrap();
        assert_eq!(cfg.strategy, StrategyChoice::Both);
        let fixed = ExperimentConfig::from_text("lr_slow = 0.01\n", &["lr_fast=0.1".into()]).unwrap();
        assert_eq!(fixed.lr_fast, 0.1);
        let err = ExperimentConfig::from_text("", &["lr_slow=1".into()]).unwrap_err().to_string();
        assert!(err.contains("--set lr_slow=1"), "{err}");
    }

    #[test]
    fn resolved_map_covers_every_key() {
        let map = ExperimentConfig::default().to_map();
        let mut keys: Vec<&str> = map.keys().map(String::as_str).collect();
        let mut expected = KEYS.to_vec();
        keys.sort_unstable();
        expected.sort_unstable();
        assert_eq!(keys, expected);
    }
}
