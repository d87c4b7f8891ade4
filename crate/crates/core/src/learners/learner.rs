use super::{rng_serde, DemoDataset, DemoSample, LearnError, ReplayBuffer, TrainConfig};
use crate::envsim::{DoneReason, Transition};
use crate::neural::losses::{actor_loss, critic_loss, cross_entropy, nll_loss};
use crate::neural::{
    clamp_unit, critic_input, observation_batch, standard_normal, unit_batch, Adam, CriticPair, DiscreteActionTable,
    DiscretePolicy, GaussianPolicy, NetworkBundle,
};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Replay batch in network layout.
#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: Array2<f64>,
    /// Normalized actions.
    pub y: Array2<f64>,
    pub reward: Array1<f64>,
    pub next_obs: Array2<f64>,
    pub done: Array1<f64>,
    /// 1 where the episode ended in a collision or off-road event.
    pub failure: Array1<f64>,
}

impl Batch {
    pub fn from_transitions(ts: &[&Transition]) -> Self {
        Self {
            obs: observation_batch(ts.iter().map(|t| &t.obs)),
            y: unit_batch(ts.iter().map(|t| &t.action)),
            reward: ts.iter().map(|t| t.reward).collect(),
            next_obs: observation_batch(ts.iter().map(|t| &t.next_obs)),
            done: ts.iter().map(|t| if t.done { 1.0 } else { 0.0 }).collect(),
            failure: ts
                .iter()
                .map(|t| match t.reason {
                    Some(DoneReason::Collision | DoneReason::Offroad) => 1.0,
                    _ => 0.0,
                })
                .collect(),
        }
    }
}

/// Exponential moving averages of the training losses.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub il_loss: f64,
    pub entropy: f64,
}

const STATS_DECAY: f64 = 0.95;

fn ema(old: &mut f64, new: f64, first: bool) {
    *old = if first { new } else { STATS_DECAY * *old + (1.0 - STATS_DECAY) * new };
}

/// Independent generator streams derived from one seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub const INIT_STREAM: u64 = 1;
pub const RL_STREAM: u64 = 2;
pub const DEMO_STREAM: u64 = 3;

/// Value of an absorbing state that pays `reward` forever.
pub fn absorbing_value(reward: f64, gamma: f64) -> f64 {
    reward / (1.0 - gamma)
}

/// Soft Bellman target for one transition; terminal transitions do not bootstrap.
pub fn soft_target(reward: f64, done: bool, gamma: f64, min_q: f64, alpha: f64, log_prob: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * (min_q - alpha * log_prob)
    }
}

/// Actor, double critic, and optimizer state for SAC and BC-SAC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousLearner {
    pub config: TrainConfig,
    pub actor: GaussianPolicy,
    pub critics: CriticPair,
    actor_opt: Adam,
    q1_opt: Adam,
    q2_opt: Adam,
    pub rl_steps: u64,
    pub il_steps: u64,
    pub stats: LossStats,
    #[serde(with = "rng_serde")]
    rl_rng: ChaCha8Rng,
    #[serde(with = "rng_serde")]
    demo_rng: ChaCha8Rng,
}

impl ContinuousLearner {
    pub fn new(config: TrainConfig, obs_dim: usize, seed: u64) -> Self {
        let mut init = stream_rng(seed, INIT_STREAM);
        let actor = GaussianPolicy::new(obs_dim, &config.hidden, &mut init);
        let critics = CriticPair::new(obs_dim, &config.hidden, &mut init);
        Self {
            actor_opt: Adam::new(&actor.net, config.actor_lr),
            q1_opt: Adam::new(&critics.q1, config.critic_lr),
            q2_opt: Adam::new(&critics.q2, config.critic_lr),
            actor,
            critics,
            config,
            rl_steps: 0,
            il_steps: 0,
            stats: LossStats::default(),
            rl_rng: stream_rng(seed, RL_STREAM),
            demo_rng: stream_rng(seed, DEMO_STREAM),
        }
    }

    pub fn bundle(&self) -> NetworkBundle {
        NetworkBundle::Continuous { actor: self.actor.clone(), critics: self.critics.clone() }
    }

    /// `r + γ·(1 − done)·(min Q̄(s', a') − α·log π(a'|s'))` for given next-action noise;
    /// failure terminals take their absorbing value when configured.
    pub fn critic_target(&self, batch: &Batch, eps: &Array2<f64>) -> Array1<f64> {
        let head = self.actor.head(batch.next_obs.clone());
        let next = head.sample_with(eps);
        let x = critic_input(&batch.next_obs, &next.y);
        let t1 = self.critics.target1.predict(x.clone());
        let t2 = self.critics.target2.predict(x);
        let gamma = self.config.gamma;
        let alpha = self.config.alpha;
        let absorbing = self.config.absorbing_failures;
        Array1::from_shape_fn(batch.reward.len(), |i| {
            if absorbing && batch.failure[i] > 0.5 {
                return absorbing_value(batch.reward[i], gamma);
            }
            soft_target(batch.reward[i], batch.done[i] > 0.5, gamma, t1[[i, 0]].min(t2[[i, 0]]), alpha, next.log_prob[i])
        })
    }

    pub fn sac_critic_update(&mut self, batch: &Batch) -> f64 {
        let eps = standard_normal(batch.reward.len(), &mut self.rl_rng);
        let target = self.critic_target(batch, &eps);
        let x = critic_input(&batch.obs, &batch.y);
        let (l1, g1) = critic_loss(&self.critics.q1, &x, &target);
        let (l2, g2) = critic_loss(&self.critics.q2, &x, &target);
        self.q1_opt.step(&mut self.critics.q1, &g1);
        self.q2_opt.step(&mut self.critics.q2, &g2);
        let loss = 0.5 * (l1 + l2);
        ema(&mut self.stats.critic_loss, loss, self.rl_steps == 0);
        loss
    }

    pub fn sac_actor_update(&mut self, batch: &Batch) -> f64 {
        let eps = standard_normal(batch.obs.nrows(), &mut self.rl_rng);
        let r = actor_loss(&self.actor, &self.critics.q1, &self.critics.q2, &batch.obs, &eps, self.config.alpha);
        self.actor_opt.step(&mut self.actor.net, &r.grad);
        ema(&mut self.stats.actor_loss, r.loss, self.rl_steps == 0);
        ema(&mut self.stats.entropy, r.entropy, self.rl_steps == 0);
        r.loss
    }

    pub fn target_sync(&mut self) {
        self.critics.sync(self.config.tau);
    }

    /// One RL update: critic step, actor step, target sync.
    pub fn rl_update(&mut self, replay: &mut ReplayBuffer) -> Result<(), LearnError> {
        let batch = Batch::from_transitions(&replay.sample(self.config.rl_batch_size, &mut self.rl_rng)?);
        self.sac_critic_update(&batch);
        self.sac_actor_update(&batch);
        self.target_sync();
        self.rl_steps += 1;
        if !self.actor.net.is_finite() || !self.critics.q1.is_finite() || !self.critics.q2.is_finite() {
            return Err(LearnError::NonFinite(format!("parameters after RL step {}", self.rl_steps)));
        }
        Ok(())
    }

    /// λ-weighted negative log-likelihood step on an expert batch.
    pub fn il_update_on(&mut self, batch: &[&DemoSample]) -> Result<f64, LearnError> {
        if batch.is_empty() {
            return Err(LearnError::EmptyBatch);
        }
        let obs = observation_batch(batch.iter().map(|d| &d.obs));
        let y = unit_batch(batch.iter().map(|d| &d.action)).mapv(clamp_unit);
        let (loss, mut grad) = nll_loss(&self.actor, &obs, &y);
        // The actor optimizer is shared so λ weighs IL against RL in the
        // moment estimates; λ = 0 skips the step and leaves the state untouched.
        if self.config.lambda > 0.0 {
            grad.scale(self.config.lambda);
            self.actor_opt.step_with_lr(&mut self.actor.net, &grad, self.config.imitation_lr);
        }
        ema(&mut self.stats.il_loss, loss, self.il_steps == 0);
        self.il_steps += 1;
        if !self.actor.net.is_finite() {
            return Err(LearnError::NonFinite(format!("actor after IL step {}", self.il_steps)));
        }
        Ok(loss)
    }

    pub fn il_update(&mut self, demos: &DemoDataset) -> Result<f64, LearnError> {
        let batch = demos.sample(self.config.bc_batch_size, &mut self.demo_rng)?;
        self.il_update_on(&batch)
    }

    /// One scheduled BC-SAC unit: `rl_per_il` RL updates (if enabled), then one IL step.
    pub fn bcsac_train_step(&mut self, replay: &mut ReplayBuffer, demos: &DemoDataset) -> Result<(), LearnError> {
        if self.config.rl_enabled {
            for _ in 0..self.config.rl_per_il {
                self.rl_update(replay)?;
            }
        }
        self.il_update(demos)?;
        Ok(())
    }

    /// One SAC unit: `rl_per_il` RL updates, no imitation.
    pub fn sac_train_step(&mut self, replay: &mut ReplayBuffer) -> Result<(), LearnError> {
        for _ in 0..self.config.rl_per_il {
            self.rl_update(replay)?;
        }
        Ok(())
    }
}

/// Discrete-action behavior cloning baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcLearner {
    pub config: TrainConfig,
    pub policy: DiscretePolicy,
    opt: Adam,
    pub steps: u64,
    pub loss: f64,
    #[serde(with = "rng_serde")]
    rng: ChaCha8Rng,
}

impl BcLearner {
    pub fn new(config: TrainConfig, obs_dim: usize, seed: u64) -> Self {
        let mut init = stream_rng(seed, INIT_STREAM);
        let policy = DiscretePolicy::new(obs_dim, &config.hidden, &mut init);
        Self { opt: Adam::new(&policy.net, config.actor_lr), policy, config, steps: 0, loss: 0.0, rng: stream_rng(seed, DEMO_STREAM) }
    }

    pub fn bundle(&self) -> NetworkBundle {
        NetworkBundle::Discrete { policy: self.policy.clone() }
    }

    /// Cross-entropy step against nearest-bin expert actions.
    pub fn bc_update(&mut self, batch: &[&DemoSample]) -> Result<f64, LearnError> {
        if batch.is_empty() {
            return Err(LearnError::EmptyBatch);
        }
        let obs = observation_batch(batch.iter().map(|d| &d.obs));
        let labels: Vec<usize> = batch.iter().map(|d| DiscreteActionTable::quantize(&d.action)).collect();
        let (loss, grad) = cross_entropy(&self.policy.net, &obs, &labels);
        self.opt.step(&mut self.policy.net, &grad);
        self.steps += 1;
        ema(&mut self.loss, loss, self.steps == 1);
        if !self.policy.net.is_finite() {
            return Err(LearnError::NonFinite(format!("BC policy after step {}", self.steps)));
        }
        Ok(loss)
    }

    pub fn step(&mut self, demos: &DemoDataset) -> Result<f64, LearnError> {
        let batch = demos.sample(self.config.bc_batch_size, &mut self.rng)?;
        self.bc_update(&batch)
    }
}
