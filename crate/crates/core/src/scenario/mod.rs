//! Scenario data model, the line-delimited scenario file, synthetic suite
//! generation with scripted experts, and dataset splitting.

mod expert;
mod generate;
mod io;
mod split;

pub use generate::{generate_scenario, generate_suite};
pub use io::{load_scenarios, read_scenarios, save_scenarios, write_scenarios, FORMAT_VERSION};
pub use split::{bucket_by_score, split_dataset, Bucket, DatasetSplit};

use crate::dynamics::{
    min_separation, signed_distance_to_road_edge, EgoState, OrientedBox, Point, Polyline,
    VehicleGeometry,
};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Simulation step, seconds (15 Hz).
pub const SCENARIO_DT: f64 = 1.0 / 15.0;
/// Steps per scenario (10 s).
pub const HORIZON: usize = 150;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: field `{field}`: {message}")]
    Malformed { line: usize, field: String, message: String },
    #[error("line {line}: unsupported format version {found} (expected {expected})")]
    VersionMismatch { line: usize, found: i64, expected: u32 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("template {template}: no valid expert after {attempts} attempts")]
    Generation { template: Template, attempts: usize },
    #[error("invalid scenario {id}: {reason}")]
    Invalid { id: String, reason: String },
    #[error("split: {0}")]
    Split(String),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Template {
    StraightCruise,
    NarrowPassage,
    OncomingSqueeze,
    IntersectionCrossing,
    PedestrianEmergence,
}

impl Template {
    pub const ALL: [Template; 5] = [
        Template::StraightCruise,
        Template::NarrowPassage,
        Template::OncomingSqueeze,
        Template::IntersectionCrossing,
        Template::PedestrianEmergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Template::StraightCruise => "straight-cruise",
            Template::NarrowPassage => "narrow-passage",
            Template::OncomingSqueeze => "oncoming-squeeze",
            Template::IntersectionCrossing => "intersection-crossing",
            Template::PedestrianEmergence => "pedestrian-emergence",
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Template {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Template::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| ScenarioError::UnknownTemplate(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Vehicle,
    Pedestrian,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Vehicle => "vehicle",
            AgentKind::Pedestrian => "pedestrian",
        }
    }
}

/// A logged background agent; `None` before spawn or after despawn.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrack {
    pub id: u32,
    pub kind: AgentKind,
    pub boxes: Vec<Option<OrientedBox>>,
}

impl AgentTrack {
    pub fn at(&self, t: usize) -> Option<&OrientedBox> {
        self.boxes.get(t).and_then(Option::as_ref)
    }

    /// Finite-difference velocity at step `t`, backward where possible.
    pub fn velocity(&self, t: usize, dt: f64) -> Option<Point> {
        let cur = self.at(t)?;
        let (a, b) = match (t.checked_sub(1).and_then(|p| self.at(p)), self.at(t + 1)) {
            (Some(prev), _) => (prev, cur),
            (None, Some(next)) => (cur, next),
            (None, None) => return Some([0.0, 0.0]),
        };
        Some([(b.cx - a.cx) / dt, (b.cy - a.cy) / dt])
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Roadgraph {
    /// Road-edge polylines; the drivable surface is on the left of each.
    pub road_edges: Vec<Vec<Point>>,
    pub lane_centers: Vec<Vec<Point>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTags {
    pub template: Template,
    pub seed: u64,
    /// Seed family; the train/test split never separates a family.
    pub family: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub dt: f64,
    pub horizon: usize,
    /// Expert ego states, `horizon + 1` entries; the first is the initial state.
    pub ego_track: Vec<EgoState>,
    pub agents: Vec<AgentTrack>,
    pub roadgraph: Roadgraph,
    pub route: Vec<Point>,
    pub goal: Point,
    pub tags: ScenarioTags,
}

/// Safety summary of the expert log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpertClearance {
    /// Smallest box separation to any agent, meters.
    pub min_agent_gap: f64,
    /// Largest signed road-edge distance (negative = on-road), meters.
    pub max_edge_distance: f64,
}

impl Scenario {
    pub fn geometry(&self) -> VehicleGeometry {
        VehicleGeometry::default()
    }

    pub fn route_polyline(&self) -> Polyline {
        Polyline::new(self.route.clone()).expect("validated route")
    }

    pub fn expert_progress(&self) -> f64 {
        let route = self.route_polyline();
        let first = self.ego_track.first().expect("non-empty track");
        let last = self.ego_track.last().expect("non-empty track");
        route.project(last.position()) - route.project(first.position())
    }

    pub fn expert_clearance(&self) -> ExpertClearance {
        let geometry = self.geometry();
        let mut out = ExpertClearance { min_agent_gap: f64::INFINITY, max_edge_distance: f64::NEG_INFINITY };
        for (t, state) in self.ego_track.iter().enumerate() {
            let ego = geometry.body_box(state);
            for agent in &self.agents {
                if let Some(b) = agent.at(t) {
                    out.min_agent_gap = out.min_agent_gap.min(min_separation(&ego, b));
                }
            }
            if let Ok(d) = signed_distance_to_road_edge(&ego, &self.roadgraph.road_edges) {
                out.max_edge_distance = out.max_edge_distance.max(d);
            }
        }
        out
    }

    /// Structural checks: lengths, finiteness, polylines.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |reason: String| Err(ScenarioError::Invalid { id: self.id.clone(), reason });
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return fail(format!("dt {}", self.dt));
        }
        if self.ego_track.len() != self.horizon + 1 {
            return fail(format!("ego track has {} states for horizon {}", self.ego_track.len(), self.horizon));
        }
        if self.ego_track.iter().any(|s| !s.is_finite()) {
            return fail("non-finite ego state".into());
        }
        for a in &self.agents {
            if a.boxes.len() != self.horizon + 1 {
                return fail(format!("agent {} has {} steps", a.id, a.boxes.len()));
            }
            if a.boxes.iter().flatten().any(|b| !b.is_finite()) {
                return fail(format!("agent {} has a non-finite box", a.id));
            }
        }
        if self.roadgraph.road_edges.is_empty() {
            return fail("no road edges".into());
        }
        for line in self.roadgraph.road_edges.iter().chain(&self.roadgraph.lane_centers) {
            if line.len() < 2 {
                return fail("polyline with fewer than 2 vertices".into());
            }
        }
        if self.route.len() < 2 || Polyline::new(self.route.clone()).map(|r| r.length()).unwrap_or(0.0) <= 0.0 {
            return fail("route must have positive length".into());
        }
        Ok(())
    }
}
