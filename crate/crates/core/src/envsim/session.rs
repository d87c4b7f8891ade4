use super::features::{featurize, Observation, PreparedScenario};
use super::reward::{nearest_agent_distance, reward_from_distances, RewardConfig, RewardTerms};
use crate::dynamics::{forward_step, inverse_action, signed_distance_to_road_edge, Action, EgoState, GeometryError};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

/// Signed road-edge distance beyond which an episode ends, meters.
pub const OFFROAD_TERMINATION: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("session already finished")]
    Finished,
    #[error("action {0:?} is non-finite or out of bounds")]
    BadAction(Action),
    #[error("geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("dynamics: {0}")]
    Dynamics(#[from] crate::dynamics::DynamicsError),
    #[error("{0}")]
    Metric(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DoneReason {
    Horizon,
    Collision,
    Offroad,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Observation,
    pub done: bool,
    pub reason: Option<DoneReason>,
}

/// Per-step safety measurements alongside the reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub terms: RewardTerms,
    /// Separation to the nearest agent, `None` if no agent is present.
    pub d_collision: Option<f64>,
    pub d_edge: f64,
    pub collision: bool,
    pub offroad: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeResult {
    pub scenario_id: String,
    pub terms: Vec<RewardTerms>,
    pub collision: bool,
    pub offroad: bool,
    pub ego_progress: f64,
    pub expert_progress: f64,
    /// Smallest agent separation over the episode (infinite without agents).
    pub min_separation: f64,
}

impl EpisodeResult {
    pub fn failed(&self) -> bool {
        self.collision || self.offroad
    }

    pub fn total_reward(&self) -> f64 {
        self.terms.iter().map(|t| t.total).sum()
    }
}

/// One closed-loop episode on a scenario; background agents replay the log.
#[derive(Debug, Clone)]
pub struct Session {
    prep: Arc<PreparedScenario>,
    config: RewardConfig,
    t: usize,
    ego: EgoState,
    obs: Observation,
    done: bool,
    start_s: f64,
    last_s: f64,
    result: EpisodeResult,
}

impl Session {
    pub fn reset(prep: &Arc<PreparedScenario>, config: &RewardConfig) -> (Session, Observation) {
        let ego = prep.scenario.ego_track[0];
        let obs = featurize(prep, &ego, 0);
        let s = prep.route.project(ego.position());
        let session = Session {
            prep: Arc::clone(prep),
            config: *config,
            t: 0,
            ego,
            obs: obs.clone(),
            done: false,
            start_s: s,
            last_s: s,
            result: EpisodeResult {
                scenario_id: prep.scenario.id.clone(),
                expert_progress: prep.expert_progress,
                min_separation: f64::INFINITY,
                ..Default::default()
            },
        };
        (session, obs)
    }

    pub fn step_index(&self) -> usize {
        self.t
    }

    pub fn ego(&self) -> &EgoState {
        &self.ego
    }

    pub fn observation(&self) -> &Observation {
        &self.obs
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn scenario(&self) -> &Arc<PreparedScenario> {
        &self.prep
    }

    pub fn result(&self) -> &EpisodeResult {
        &self.result
    }

    pub fn into_result(self) -> EpisodeResult {
        self.result
    }

    pub fn step(&mut self, action: Action) -> Result<(Transition, StepInfo), EnvError> {
        if self.done {
            return Err(EnvError::Finished);
        }
        if !action.is_finite() || !action.in_bounds() {
            return Err(EnvError::BadAction(action));
        }
        let scenario = &self.prep.scenario;
        let geometry = scenario.geometry();
        let next = forward_step(&self.ego, &action, &geometry, scenario.dt)?;
        let t = self.t + 1;
        let body = geometry.body_box(&next);
        let d_collision = nearest_agent_distance(&body, scenario.agents.iter().filter_map(|a| a.at(t)));
        let d_edge = signed_distance_to_road_edge(&body, &scenario.roadgraph.road_edges)?;
        let s = self.prep.route.project(next.position());
        let terms = reward_from_distances(d_collision, d_edge, s - self.last_s, &self.config);
        let collision = d_collision.is_some_and(|d| d <= 0.0);
        let offroad = d_edge > 0.0;
        let reason = if collision {
            Some(DoneReason::Collision)
        } else if d_edge > OFFROAD_TERMINATION {
            Some(DoneReason::Offroad)
        } else if t >= scenario.horizon {
            Some(DoneReason::Horizon)
        } else {
            None
        };
        let next_obs = featurize(&self.prep, &next, t);

        self.result.terms.push(terms);
        self.result.collision |= collision;
        self.result.offroad |= offroad;
        self.result.ego_progress = s - self.start_s;
        if let Some(d) = d_collision {
            self.result.min_separation = self.result.min_separation.min(d);
        }
        let transition = Transition {
            obs: std::mem::replace(&mut self.obs, next_obs.clone()),
            action,
            reward: terms.total,
            next_obs,
            done: reason.is_some(),
            reason,
        };
        self.t = t;
        self.ego = next;
        self.last_s = s;
        self.done = reason.is_some();
        Ok((transition, StepInfo { terms, d_collision, d_edge, collision, offroad }))
    }
}

/// Decision rule mapping observations to actions.
pub trait Policy {
    /// `stochastic` selects sampling over the distribution mode.
    fn act(&mut self, obs: &Observation, step: usize, stochastic: bool) -> Action;
}

/// Replays the expert log through inverse dynamics, open loop.
#[derive(Debug, Clone)]
pub struct ExpertPlayback {
    actions: Vec<Action>,
}

impl ExpertPlayback {
    pub fn new(prep: &PreparedScenario) -> Result<Self, EnvError> {
        let s = &prep.scenario;
        let geometry = s.geometry();
        let actions = s
            .ego_track
            .windows(2)
            .map(|w| inverse_action(&w[0], &w[1], &geometry, s.dt).map(|sol| sol.action))
            .collect::<Result<_, _>>()?;
        Ok(Self { actions })
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }
}

impl Policy for ExpertPlayback {
    fn act(&mut self, _obs: &Observation, step: usize, _stochastic: bool) -> Action {
        self.actions.get(step).copied().unwrap_or(Action::ZERO)
    }
}

pub fn rollout(
    policy: &mut dyn Policy,
    prep: &Arc<PreparedScenario>,
    config: &RewardConfig,
    stochastic: bool,
) -> Result<(Vec<Transition>, EpisodeResult), EnvError> {
    let (mut session, mut obs) = Session::reset(prep, config);
    let mut transitions = Vec::with_capacity(prep.scenario.horizon);
    while !session.is_done() {
        let action = policy.act(&obs, session.step_index(), stochastic);
        let (tr, _) = session.step(action)?;
        obs = tr.next_obs.clone();
        transitions.push(tr);
    }
    Ok((transitions, session.into_result()))
}

/// Percentage of episodes with at least one collision or off-road event.
pub fn failure_rate(results: &[EpisodeResult]) -> Result<f64, EnvError> {
    if results.is_empty() {
        return Err(EnvError::Metric("failure rate of an empty result list".into()));
    }
    Ok(100.0 * results.iter().filter(|r| r.failed()).count() as f64 / results.len() as f64)
}

/// Mean ego-to-expert route progress, in percent.
pub fn route_progress_ratio(results: &[EpisodeResult]) -> Result<f64, EnvError> {
    if results.is_empty() {
        return Err(EnvError::Metric("progress ratio of an empty result list".into()));
    }
    let mut sum = 0.0;
    for r in results {
        if !(r.expert_progress > 0.0) {
            return Err(EnvError::Metric(format!("scenario {} has no expert progress", r.scenario_id)));
        }
        sum += r.ego_progress / r.expert_progress;
    }
    Ok(100.0 * sum / results.len() as f64)
}
