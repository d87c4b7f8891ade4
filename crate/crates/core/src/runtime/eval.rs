use super::RuntimeError;
use crate::dynamics::Action;
use crate::envsim::{rollout, EpisodeResult, ExpertPlayback, Observation, Policy, PreparedScenario, RewardConfig};
use crate::learners::stream_rng;
use crate::neural::NetworkBundle;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use std::thread;

/// Acts with the actor of a trained bundle.
pub struct BundlePolicy<'a> {
    bundle: &'a NetworkBundle,
    rng: ChaCha8Rng,
}

impl<'a> BundlePolicy<'a> {
    pub fn new(bundle: &'a NetworkBundle, seed: u64) -> Self {
        Self { bundle, rng: stream_rng(seed, 0) }
    }
}

impl Policy for BundlePolicy<'_> {
    fn act(&mut self, obs: &Observation, _step: usize, stochastic: bool) -> Action {
        match self.bundle {
            NetworkBundle::Continuous { actor, .. } if stochastic => actor.sample(obs, &mut self.rng).0,
            NetworkBundle::Continuous { actor, .. } => actor.mean_action(obs),
            NetworkBundle::Discrete { policy } if stochastic => policy.sample(obs, &mut self.rng),
            NetworkBundle::Discrete { policy } => policy.mode_action(obs),
        }
    }
}

/// One closed-loop evaluation episode.
#[derive(Debug, Clone)]
pub struct EvalEpisode {
    pub result: EpisodeResult,
    pub actions: Vec<Action>,
}

/// Runs one deterministic episode per scenario, split across `threads`.
/// Output order follows `scenarios`.
pub fn evaluate_with<'p, F>(
    scenarios: &[Arc<PreparedScenario>],
    reward: &RewardConfig,
    threads: usize,
    make_policy: F,
) -> Result<Vec<EvalEpisode>, RuntimeError>
where
    F: Fn(&Arc<PreparedScenario>) -> Result<Box<dyn Policy + 'p>, RuntimeError> + Sync,
{
    if scenarios.is_empty() {
        return Ok(Vec::new());
    }
    let chunk = scenarios.len().div_ceil(threads.max(1));
    let run_chunk = |part: &[Arc<PreparedScenario>]| -> Result<Vec<EvalEpisode>, RuntimeError> {
        part.iter()
            .map(|prep| {
                let mut policy = make_policy(prep)?;
                let (transitions, result) = rollout(policy.as_mut(), prep, reward, false)?;
                Ok(EvalEpisode { result, actions: transitions.iter().map(|t| t.action).collect() })
            })
            .collect()
    };
    let parts: Vec<Result<Vec<EvalEpisode>, RuntimeError>> = thread::scope(|s| {
        let handles: Vec<_> = scenarios.chunks(chunk).map(|part| s.spawn(move || run_chunk(part))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(RuntimeError::Worker("evaluation thread panicked".into()))))
            .collect()
    });
    let mut out = Vec::with_capacity(scenarios.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Evaluates the bundle's deterministic policy on every scenario.
pub fn evaluate(
    bundle: &NetworkBundle,
    scenarios: &[Arc<PreparedScenario>],
    reward: &RewardConfig,
    threads: usize,
) -> Result<Vec<EvalEpisode>, RuntimeError> {
    evaluate_with(scenarios, reward, threads, |_| Ok(Box::new(BundlePolicy::new(bundle, 0))))
}

/// Evaluates open-loop expert playback on every scenario.
pub fn evaluate_expert(
    scenarios: &[Arc<PreparedScenario>],
    reward: &RewardConfig,
    threads: usize,
) -> Result<Vec<EvalEpisode>, RuntimeError> {
    evaluate_with(scenarios, reward, threads, |prep| Ok(Box::new(ExpertPlayback::new(prep)?)))
}
