//! Behavior cloning, SAC, and BC-SAC updates with replay accounting.

mod config;
mod demos;
mod learner;
mod replay;
pub(crate) mod rng_serde;

pub use config::TrainConfig;
pub use demos::*;
pub use learner::*;
pub use replay::{read_replay, write_replay, ReplayBuffer};

use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("replay not warm: {have} of {need} transitions")]
    Warmup { have: usize, need: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("demos: {0}")]
    Demo(String),
    #[error("replay file: {0}")]
    Replay(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One line of the training-progress log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgressRecord {
    pub step: u64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub il_loss: f64,
    pub entropy: f64,
    pub replay_ratio: f64,
}

impl ProgressRecord {
    pub fn write_line<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", serde_json::to_string(self).expect("plain record"))
    }
}
