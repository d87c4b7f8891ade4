//! In-process actor-learner training: rollout workers feed a replay buffer,
//! demo workers feed imitation batches, and one learner consumes both while
//! publishing read-only policy snapshots.

mod eval;
mod threaded;

pub use eval::*;
pub use threaded::{rollout_throughput, SnapshotChannel};

use crate::dynamics::Action;
use crate::envsim::{EnvError, PreparedScenario, RewardConfig, Session, OBS_DIM};
use crate::learners::{
    read_replay, rng_serde, stream_rng, write_replay, BcLearner, ContinuousLearner, DemoDataset, LearnError,
    LossStats, ProgressRecord, ReplayBuffer, TrainConfig,
};
use crate::neural::{load_checkpoint, save_checkpoint, CheckpointError, GaussianPolicy, NetworkBundle};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("worker failed: {0}")]
    Worker(String),
    #[error("transition accounting mismatch: {sent} sent, {received} received")]
    Reconcile { sent: u64, received: u64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Bc,
    Sac,
    BcSac,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Bc, Method::Sac, Method::BcSac];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bc => "bc",
            Method::Sac => "sac",
            Method::BcSac => "bc-sac",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected bc, sac or bc-sac)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub train: TrainConfig,
    pub reward: RewardConfig,
    /// RL updates for SAC and BC-SAC; gradient steps for BC and for BC-SAC
    /// with RL disabled.
    pub step_budget: u64,
    pub seed: u64,
    pub workers: usize,
    pub demo_workers: usize,
    /// Worker threads; otherwise a deterministic single-threaded schedule.
    pub threaded: bool,
    /// Learner units between snapshot publications.
    pub snapshot_interval: u64,
    /// Learner units between progress records.
    pub log_interval: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::BcSac,
            train: TrainConfig::default(),
            reward: RewardConfig::default(),
            step_budget: 100_000,
            seed: 0,
            workers: 4,
            demo_workers: 1,
            threaded: false,
            snapshot_interval: 1,
            log_interval: 100,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RuntimeError> {
        self.train.validate().map_err(RuntimeError::Config)?;
        self.reward.validate().map_err(RuntimeError::Config)?;
        if self.workers == 0 {
            return Err(RuntimeError::Config("at least one rollout worker is required".into()));
        }
        if self.threaded && self.demo_workers == 0 && self.method == Method::BcSac {
            return Err(RuntimeError::Config("BC-SAC needs a demo worker in threaded mode".into()));
        }
        if self.snapshot_interval == 0 || self.log_interval == 0 {
            return Err(RuntimeError::Config("snapshot and log intervals must be positive".into()));
        }
        Ok(())
    }

    /// Whether the run steps the environment at all.
    pub fn uses_environment(&self) -> bool {
        match self.method {
            Method::Bc => false,
            Method::Sac => true,
            Method::BcSac => self.train.rl_enabled,
        }
    }

    pub fn uses_demos(&self) -> bool {
        self.method != Method::Sac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunCounters {
    pub env_steps: u64,
    pub episodes: u64,
    /// Transitions handed over by workers.
    pub enqueued: u64,
    /// Transitions inserted into replay.
    pub inserted: u64,
    /// Replay items drawn by the learner.
    pub sampled: u64,
    pub rl_steps: u64,
    pub il_steps: u64,
    pub bc_steps: u64,
    pub units: u64,
    pub snapshots: u64,
}

impl RunCounters {
    pub fn sample_to_insert(&self) -> f64 {
        if self.inserted == 0 {
            0.0
        } else {
            self.sampled as f64 / self.inserted as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub bundle: NetworkBundle,
    pub progress: Vec<ProgressRecord>,
    pub counters: RunCounters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LearnerKind {
    Discrete(BcLearner),
    Continuous(ContinuousLearner),
}

/// A rollout worker; the in-flight episode is kept as its action history so
/// it can be rebuilt exactly on resume.
#[derive(Debug, Clone)]
struct Worker {
    rng: ChaCha8Rng,
    scenario: Option<usize>,
    actions: Vec<Action>,
    session: Option<Session>,
}

#[derive(Serialize, Deserialize)]
struct WorkerState {
    #[serde(with = "rng_serde")]
    rng: ChaCha8Rng,
    scenario: Option<usize>,
    actions: Vec<[f64; 2]>,
}

pub(crate) fn progress_record(step: u64, stats: &LossStats, replay_ratio: f64) -> ProgressRecord {
    ProgressRecord {
        step,
        critic_loss: stats.critic_loss,
        actor_loss: stats.actor_loss,
        il_loss: stats.il_loss,
        entropy: stats.entropy,
        replay_ratio,
    }
}

const WORKER_STREAM: u64 = 100;
pub(crate) const DEMO_WORKER_STREAM: u64 = 200;

impl Worker {
    fn new(seed: u64, index: usize) -> Self {
        Self { rng: stream_rng(seed, WORKER_STREAM + index as u64), scenario: None, actions: Vec::new(), session: None }
    }

    /// Samples from the snapshot and advances one step; returns the transition
    /// and whether a new episode started.
    fn step(
        &mut self,
        policy: &GaussianPolicy,
        scenarios: &[Arc<PreparedScenario>],
        reward: &RewardConfig,
    ) -> Result<(crate::envsim::Transition, bool), RuntimeError> {
        let mut started = false;
        if self.session.is_none() {
            let idx = self.rng.random_range(0..scenarios.len());
            self.session = Some(Session::reset(&scenarios[idx], reward).0);
            self.scenario = Some(idx);
            self.actions.clear();
            started = true;
        }
        let session = self.session.as_mut().expect("session present");
        let (action, _) = policy.sample(session.observation(), &mut self.rng);
        let (transition, _) = session.step(action)?;
        self.actions.push(action);
        if session.is_done() {
            self.session = None;
            self.scenario = None;
            self.actions.clear();
        }
        Ok((transition, started))
    }

    fn state(&self) -> WorkerState {
        WorkerState {
            rng: self.rng.clone(),
            scenario: self.scenario,
            actions: self.actions.iter().map(|a| [a.steer, a.accel]).collect(),
        }
    }

    fn restore(st: WorkerState, scenarios: &[Arc<PreparedScenario>], reward: &RewardConfig) -> Result<Self, RuntimeError> {
        let actions: Vec<Action> = st.actions.iter().map(|a| Action::new(a[0], a[1])).collect();
        let session = match st.scenario {
            Some(idx) => {
                let prep = scenarios
                    .get(idx)
                    .ok_or_else(|| RuntimeError::Config(format!("checkpoint refers to scenario {idx}")))?;
                let mut s = Session::reset(prep, reward).0;
                for a in &actions {
                    s.step(*a)?;
                }
                Some(s)
            }
            None => None,
        };
        Ok(Self { rng: st.rng, scenario: st.scenario, actions, session })
    }
}

#[derive(Serialize, Deserialize)]
struct TrainerState {
    config: RunConfig,
    learner: LearnerKind,
    workers: Vec<WorkerState>,
    snapshot: Option<GaussianPolicy>,
    next_worker: usize,
    counters: RunCounters,
    progress: Vec<ProgressRecord>,
}

/// Deterministic single-threaded trainer; resumable from disk.
pub struct Trainer {
    config: RunConfig,
    scenarios: Vec<Arc<PreparedScenario>>,
    demos: Arc<DemoDataset>,
    learner: LearnerKind,
    replay: ReplayBuffer,
    workers: Vec<Worker>,
    /// Policy the workers act with; refreshed every `snapshot_interval` units.
    snapshot: Option<GaussianPolicy>,
    next_worker: usize,
    counters: RunCounters,
    progress: Vec<ProgressRecord>,
}

const STATE_FILE: &str = "trainer.json";
const REPLAY_FILE: &str = "replay.bin";

impl Trainer {
    pub fn new(config: RunConfig, scenarios: Vec<Arc<PreparedScenario>>, demos: Arc<DemoDataset>) -> Result<Self, RuntimeError> {
        config.validate()?;
        if config.uses_environment() && scenarios.is_empty() {
            return Err(RuntimeError::Config("empty training bucket".into()));
        }
        if config.uses_demos() && demos.usable_len() == 0 {
            return Err(RuntimeError::Config("no usable demonstrations".into()));
        }
        let learner = match config.method {
            Method::Bc => LearnerKind::Discrete(BcLearner::new(config.train.clone(), OBS_DIM, config.seed)),
            Method::Sac | Method::BcSac => {
                LearnerKind::Continuous(ContinuousLearner::new(config.train.clone(), OBS_DIM, config.seed))
            }
        };
        let snapshot = match &learner {
            LearnerKind::Continuous(l) => Some(l.actor.clone()),
            LearnerKind::Discrete(_) => None,
        };
        let workers = (0..config.workers).map(|i| Worker::new(config.seed, i)).collect();
        Ok(Self {
            replay: ReplayBuffer::new(config.train.replay_capacity, config.train.warmup),
            config,
            scenarios,
            demos,
            learner,
            workers,
            snapshot,
            next_worker: 0,
            counters: RunCounters::default(),
            progress: Vec::new(),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn counters(&self) -> RunCounters {
        self.counters
    }

    pub fn learner(&self) -> &LearnerKind {
        &self.learner
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn bundle(&self) -> NetworkBundle {
        match &self.learner {
            LearnerKind::Discrete(l) => l.bundle(),
            LearnerKind::Continuous(l) => l.bundle(),
        }
    }

    /// Steps counted against the budget.
    pub fn budget_steps(&self) -> u64 {
        match (&self.learner, self.config.uses_environment()) {
            (LearnerKind::Discrete(l), _) => l.steps,
            (LearnerKind::Continuous(l), true) => l.rl_steps,
            (LearnerKind::Continuous(l), false) => l.il_steps,
        }
    }

    fn collect_one(&mut self) -> Result<(), RuntimeError> {
        let i = self.next_worker;
        self.next_worker = (i + 1) % self.workers.len();
        let policy = self.snapshot.as_ref().expect("continuous learner has a snapshot");
        let (t, started) = self.workers[i].step(policy, &self.scenarios, &self.config.reward)?;
        self.counters.env_steps += 1;
        self.counters.episodes += started as u64;
        self.counters.enqueued += 1;
        self.replay.insert(t);
        self.counters.inserted += 1;
        Ok(())
    }

    fn unit_samples(&self) -> u64 {
        (self.config.train.rl_per_il * self.config.train.rl_batch_size) as u64
    }

    /// Learner is throttled until inserts catch up with the sample-to-insert target.
    fn learner_may_run(&self) -> bool {
        self.replay.is_warm()
            && (self.replay.sampled() + self.unit_samples()) as f64 <= self.config.train.sample_to_insert * self.replay.inserted() as f64
    }

    fn log(&mut self) {
        let stats = match &self.learner {
            LearnerKind::Discrete(l) => LossStats { il_loss: l.loss, ..LossStats::default() },
            LearnerKind::Continuous(l) => l.stats,
        };
        self.progress.push(progress_record(self.budget_steps(), &stats, self.replay.sample_to_insert_ratio()));
    }

    /// Trains until the budget-counted step reaches `target` (or the configured budget).
    pub fn run_until(&mut self, target: u64) -> Result<(), RuntimeError> {
        let target = target.min(self.config.step_budget);
        while self.budget_steps() < target {
            self.run_unit()?;
            self.counters.units += 1;
            if self.counters.units.is_multiple_of(self.config.snapshot_interval) {
                if let LearnerKind::Continuous(l) = &self.learner {
                    self.snapshot = Some(l.actor.clone());
                    self.counters.snapshots += 1;
                }
            }
            if self.counters.units.is_multiple_of(self.config.log_interval) {
                self.log();
            }
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<(), RuntimeError> {
        self.run_until(self.config.step_budget)
    }

    fn run_unit(&mut self) -> Result<(), RuntimeError> {
        let uses_env = self.config.uses_environment();
        if uses_env {
            while !self.learner_may_run() {
                self.collect_one()?;
            }
        }
        match (&mut self.learner, self.config.method) {
            (LearnerKind::Discrete(l), _) => {
                l.step(&self.demos)?;
                self.counters.bc_steps = l.steps;
            }
            (LearnerKind::Continuous(l), Method::Sac) => l.sac_train_step(&mut self.replay)?,
            (LearnerKind::Continuous(l), _) => l.bcsac_train_step(&mut self.replay, &self.demos)?,
        }
        if let LearnerKind::Continuous(l) = &self.learner {
            self.counters.rl_steps = l.rl_steps;
            self.counters.il_steps = l.il_steps;
        }
        self.counters.sampled = self.replay.sampled();
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<(), RuntimeError> {
        fs::create_dir_all(dir)?;
        let state = TrainerState {
            config: self.config.clone(),
            learner: self.learner.clone(),
            workers: self.workers.iter().map(Worker::state).collect(),
            snapshot: self.snapshot.clone(),
            next_worker: self.next_worker,
            counters: self.counters,
            progress: self.progress.clone(),
        };
        let tmp = dir.join(format!("{REPLAY_FILE}.tmp"));
        write_replay(BufWriter::new(fs::File::create(&tmp)?), &self.replay)?;
        fs::rename(&tmp, dir.join(REPLAY_FILE))?;
        save_checkpoint(&dir.join(STATE_FILE), &state)?;
        Ok(())
    }

    pub fn has_checkpoint(dir: &Path) -> bool {
        dir.join(STATE_FILE).exists() && dir.join(REPLAY_FILE).exists()
    }

    /// Restores a saved trainer. The step budget may differ from the saved one.
    pub fn resume(
        dir: &Path,
        step_budget: u64,
        scenarios: Vec<Arc<PreparedScenario>>,
        demos: Arc<DemoDataset>,
    ) -> Result<Self, RuntimeError> {
        let mut state: TrainerState = load_checkpoint(&dir.join(STATE_FILE))?;
        state.config.step_budget = step_budget;
        let replay = read_replay(BufReader::new(fs::File::open(dir.join(REPLAY_FILE))?))?;
        let workers = state
            .workers
            .into_iter()
            .map(|w| Worker::restore(w, &scenarios, &state.config.reward))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            config: state.config,
            scenarios,
            demos,
            learner: state.learner,
            replay,
            workers,
            snapshot: state.snapshot,
            next_worker: state.next_worker,
            counters: state.counters,
            progress: state.progress,
        })
    }

    pub fn into_output(self) -> RunOutput {
        RunOutput { bundle: self.bundle(), progress: self.progress, counters: self.counters }
    }
}

/// Trains one policy per the configuration.
pub fn run_training(
    config: &RunConfig,
    scenarios: &[Arc<PreparedScenario>],
    demos: &Arc<DemoDataset>,
) -> Result<RunOutput, RuntimeError> {
    if config.threaded && config.uses_environment() {
        return threaded::run_threaded(config, scenarios, demos);
    }
    let mut trainer = Trainer::new(config.clone(), scenarios.to_vec(), Arc::clone(demos))?;
    trainer.run()?;
    Ok(trainer.into_output())
}
