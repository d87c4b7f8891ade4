use crate::error::{CliError, Result};
use bcsac_core::envsim::{RewardConfig, RewardMode};
use bcsac_core::learners::TrainConfig;
use bcsac_core::runtime::{Method, RunConfig};
use bcsac_core::scenario::Bucket;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};

/// One-axis reward or objective sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationAxis {
    /// Collision weight; the off-road weight is `COLLISION_OFFROAD_SUM − w`.
    CollisionWeight,
    /// Dense versus binary reward; points are ignored.
    RewardMode,
    CollisionOffset,
    OffroadOffset,
    Lambda,
    ProgressWeight,
}

pub const COLLISION_OFFROAD_SUM: f64 = 2.0;

impl AblationAxis {
    pub fn name(self) -> &'static str {
        match self {
            AblationAxis::CollisionWeight => "collision-weight",
            AblationAxis::RewardMode => "reward-mode",
            AblationAxis::CollisionOffset => "collision-offset",
            AblationAxis::OffroadOffset => "offroad-offset",
            AblationAxis::Lambda => "lambda",
            AblationAxis::ProgressWeight => "progress-weight",
        }
    }
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One point of a sweep: a label and the configuration change it makes.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationPoint {
    pub label: String,
    pub value: f64,
    pub reward: RewardConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    /// Exactly one axis per sweep.
    pub axes: Vec<AblationAxis>,
    pub points: Vec<f64>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self { axes: vec![AblationAxis::CollisionWeight], points: vec![0.0, 1.0, 2.0] }
    }
}

impl AblateConfig {
    pub fn axis(&self) -> Result<AblationAxis> {
        match self.axes.as_slice() {
            [axis] => Ok(*axis),
            [] => Err(CliError::Config("ablate.axes is empty".into())),
            _ => Err(CliError::Config(format!("multi-axis sweeps are not supported (got {} axes)", self.axes.len()))),
        }
    }

    /// Expands the sweep against a base configuration.
    pub fn expand(&self, reward: &RewardConfig, train: &TrainConfig) -> Result<Vec<AblationPoint>> {
        let axis = self.axis()?;
        if axis == AblationAxis::RewardMode {
            return Ok([(RewardMode::Dense, "dense", 0.0), (RewardMode::Binary, "binary", 1.0)]
                .into_iter()
                .map(|(mode, label, value)| AblationPoint {
                    label: label.into(),
                    value,
                    reward: RewardConfig { mode, ..*reward },
                    train: train.clone(),
                })
                .collect());
        }
        if self.points.is_empty() {
            return Err(CliError::Config(format!("sweep over {axis} has no points")));
        }
        self.points
            .iter()
            .map(|&v| {
                let (mut r, mut t) = (*reward, train.clone());
                match axis {
                    AblationAxis::CollisionWeight => {
                        r.w_collision = v;
                        r.w_offroad = COLLISION_OFFROAD_SUM - v;
                    }
                    AblationAxis::CollisionOffset => r.d_c_offset = v,
                    AblationAxis::OffroadOffset => r.d_o_offset = v,
                    AblationAxis::Lambda => t.lambda = v,
                    AblationAxis::ProgressWeight => r.w_progress = v,
                    AblationAxis::RewardMode => unreachable!("handled above"),
                }
                r.validate().map_err(CliError::Config)?;
                t.validate().map_err(CliError::Config)?;
                Ok(AblationPoint { label: format!("{v:.4}"), value: v, reward: r, train: t })
            })
            .collect()
    }
}

/// Learner settings sized for a single desktop CPU: smaller networks and a
/// shorter warmup than the full-scale defaults, with learning rates raised
/// to match the shorter budget.
pub fn desk_train_config() -> TrainConfig {
    TrainConfig {
        hidden: vec![64, 64],
        warmup: 2_000,
        replay_capacity: 100_000,
        actor_lr: 3e-4,
        critic_lr: 1e-3,
        imitation_lr: 1.5e-4,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    pub train_bucket: Bucket,
    pub reward: RewardConfig,
    pub train: TrainConfig,
    pub step_budget: u64,
    pub eval_buckets: Vec<Bucket>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Master seed for generation, the split, and the difficulty probe.
    pub seed: u64,
    pub scenarios_per_template: usize,
    pub test_fraction: f64,
    /// Gradient steps for the behavior-cloning probe used in scoring.
    pub probe_budget: u64,
    pub workers: usize,
    pub threaded: bool,
    pub eval_threads: usize,
    /// Budget steps between resumable trainer checkpoints; 0 disables them.
    pub checkpoint_interval: u64,
    pub ablate: AblateConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::BcSac,
            train_bucket: Bucket::All,
            reward: RewardConfig::default(),
            train: desk_train_config(),
            step_budget: 30_000,
            eval_buckets: Bucket::ALL.to_vec(),
            seeds: vec![0, 1, 2],
            out_dir: PathBuf::from("runs"),
            seed: 0,
            scenarios_per_template: 80,
            test_fraction: 0.25,
            probe_budget: 5_000,
            workers: 4,
            threaded: false,
            eval_threads: 1,
            checkpoint_interval: 0,
            ablate: AblateConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML, applies `key=value` overrides (dotted keys reach nested
    /// tables), and validates.
    pub fn load(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for (key, raw) in overrides {
            set_path(&mut table, key, parse_value(raw))?;
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::load(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must be non-empty".into()));
        }
        if self.eval_buckets.is_empty() {
            return Err(CliError::Config("eval_buckets must be non-empty".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(CliError::Config(format!("test_fraction {} outside (0, 1)", self.test_fraction)));
        }
        if self.scenarios_per_template == 0 {
            return Err(CliError::Config("scenarios_per_template must be positive".into()));
        }
        if self.eval_threads == 0 {
            return Err(CliError::Config("eval_threads must be positive".into()));
        }
        self.run_config(self.method, self.seeds[0]).validate()?;
        Ok(())
    }

    pub fn run_config(&self, method: Method, seed: u64) -> RunConfig {
        RunConfig {
            method,
            train: self.train.clone(),
            reward: self.reward,
            step_budget: self.step_budget,
            seed,
            workers: self.workers,
            threaded: self.threaded,
            ..RunConfig::default()
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed override key `{key}`")));
    }
    let (last, parents) = parts.split_last().expect("non-empty key");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
