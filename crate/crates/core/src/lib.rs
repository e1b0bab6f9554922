//! Wake-sleep continual learning.
//!
//! A shared feature extractor with one classification head per task learns
//! a sequence of tasks. Each task is acquired in a *wake* phase (train the
//! new head on frozen features, fit a conditional GAN to the task's data)
//! and consolidated in a *sleep* phase (distill a teacher into the whole
//! model on samples drawn from the stored generators). No raw training data
//! is kept between tasks. A sequential fine-tuning baseline and an
//! evaluation harness are included for comparison.

pub mod autograd;
pub mod config;
pub mod container;
pub mod data;
pub mod engine;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod memory;
pub mod nn;
pub mod optim;
pub mod report;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
