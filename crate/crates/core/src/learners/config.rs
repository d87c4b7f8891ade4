use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub imitation_lr: f64,
    pub rl_batch_size: usize,
    pub bc_batch_size: usize,
    /// Imitation weight applied to the IL step of BC-SAC.
    pub lambda: f64,
    /// RL updates per IL step.
    pub rl_per_il: usize,
    pub tau: f64,
    /// Fixed entropy coefficient.
    pub alpha: f64,
    pub hidden: Vec<usize>,
    pub warmup: usize,
    pub replay_capacity: usize,
    /// Target ratio of sampled items to inserted transitions.
    pub sample_to_insert: f64,
    /// When false, BC-SAC performs only its IL steps (continuous BC).
    pub rl_enabled: bool,
    /// Collision and off-road terminals are valued as absorbing states that
    /// repeat their final reward; otherwise every terminal has zero future.
    pub absorbing_failures: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.92,
            actor_lr: 1e-4,
            critic_lr: 1e-4,
            imitation_lr: 5e-5,
            rl_batch_size: 64,
            bc_batch_size: 256,
            lambda: 1.0,
            rl_per_il: 8,
            tau: 0.005,
            alpha: 0.05,
            hidden: vec![256, 256],
            warmup: 5_000,
            replay_capacity: 200_000,
            sample_to_insert: 8.0,
            rl_enabled: true,
            absorbing_failures: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(format!("gamma {} outside (0, 1)", self.gamma));
        }
        for (name, v) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("imitation_lr", self.imitation_lr),
            ("sample_to_insert", self.sample_to_insert),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(format!("tau {} outside [0, 1]", self.tau));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if self.rl_batch_size == 0 || self.bc_batch_size == 0 || self.rl_per_il == 0 {
            return Err("batch sizes and rl_per_il must be positive".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(format!("hidden sizes {:?} must be non-empty and positive", self.hidden));
        }
        if self.replay_capacity < self.warmup.max(self.rl_batch_size) {
            return Err("replay capacity below warmup or batch size".into());
        }
        Ok(())
    }
}
