//! Per-step reward terms.

use crate::dynamics::{min_separation, signed_distance_to_road_edge, GeometryError, OrientedBox, Point};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    Dense,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub w_collision: f64,
    pub w_offroad: f64,
    /// Collision margin, meters.
    pub d_c_offset: f64,
    /// Road-edge margin, meters.
    pub d_o_offset: f64,
    pub offroad_floor: f64,
    pub mode: RewardMode,
    pub w_progress: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            w_collision: 1.0,
            w_offroad: 1.0,
            d_c_offset: 1.0,
            d_o_offset: 1.0,
            offroad_floor: -2.0,
            mode: RewardMode::Dense,
            w_progress: 0.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), String> {
        let finite = [self.w_collision, self.w_offroad, self.d_c_offset, self.d_o_offset, self.offroad_floor, self.w_progress]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err("reward parameters must be finite".into());
        }
        if self.w_collision < 0.0 || self.w_offroad < 0.0 || self.w_progress < 0.0 {
            return Err("reward weights must be non-negative".into());
        }
        if self.d_c_offset < 0.0 || self.d_o_offset < 0.0 {
            return Err("reward offsets must be non-negative".into());
        }
        if self.offroad_floor >= 0.0 {
            return Err("offroad floor must be negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardTerms {
    pub r_collision: f64,
    pub r_offroad: f64,
    pub r_progress: f64,
    pub total: f64,
}

/// Reward from precomputed distances. `d_collision` is `None` when no agent
/// is present; `d_edge` is the signed road-edge distance (positive off-road).
pub fn reward_from_distances(
    d_collision: Option<f64>,
    d_edge: f64,
    progress: f64,
    config: &RewardConfig,
) -> RewardTerms {
    let r_progress = config.w_progress * progress.max(0.0);
    let (r_collision, r_offroad) = match config.mode {
        RewardMode::Dense => (
            d_collision.map_or(0.0, |d| config.w_collision * (d - config.d_c_offset).min(0.0)),
            config.w_offroad * (-config.d_o_offset - d_edge).clamp(config.offroad_floor, 0.0),
        ),
        RewardMode::Binary => {
            let collided = d_collision.is_some_and(|d| d <= 0.0);
            let offroad = d_edge > 0.0;
            (if collided { -1.0 } else { 0.0 }, if offroad && !collided { -1.0 } else { 0.0 })
        }
    };
    RewardTerms { r_collision, r_offroad, r_progress, total: r_collision + r_offroad + r_progress }
}

/// Smallest separation from `ego` to any of `agents`.
pub fn nearest_agent_distance<'a>(ego: &OrientedBox, agents: impl IntoIterator<Item = &'a OrientedBox>) -> Option<f64> {
    agents.into_iter().map(|b| min_separation(ego, b)).reduce(f64::min)
}

pub fn reward_terms<'a>(
    ego: &OrientedBox,
    agents: impl IntoIterator<Item = &'a OrientedBox>,
    road_edges: &[Vec<Point>],
    progress: f64,
    config: &RewardConfig,
) -> Result<RewardTerms, GeometryError> {
    let d_edge = signed_distance_to_road_edge(ego, road_edges)?;
    Ok(reward_from_distances(nearest_agent_distance(ego, agents), d_edge, progress, config))
}
