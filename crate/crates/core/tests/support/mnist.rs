//! Desk-scale Split-MNIST exactly as the `run` command builds it.

#![allow(dead_code)]

use std::path::PathBuf;

use mygo::config::ExperimentConfig;
use mygo::data::TaskSpec;
use mygo::experiment::load_seeded_benchmark;

/// `MYGO_DATA_DIR`, else the workspace `data/` directory.
pub fn data_root() -> PathBuf {
    std::env::var_os("MYGO_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data")))
}

pub fn desk_config() -> ExperimentConfig {
    ExperimentConfig { data_dir: Some(data_root()), ..ExperimentConfig::default() }
}

/// The five tasks of the default config (500 train, 250 test per class).
pub fn desk_tasks() -> Vec<TaskSpec> {
    let cfg = desk_config();
    match load_seeded_benchmark(&cfg) {
        Ok(b) => b.tasks,
        Err(e) => panic!("MNIST not available ({e}); run scripts/fetch_mnist.sh or set MYGO_DATA_DIR"),
    }
}
