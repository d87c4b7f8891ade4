//! Fixed-size ego-frame featurization.

use crate::dynamics::{to_local, EgoState, Point, Polyline};
use crate::scenario::{AgentTrack, Scenario};
use std::sync::Arc;

pub const MAX_AGENTS: usize = 8;
pub const AGENT_FEATURES: usize = 7;
pub const EDGE_POINTS: usize = 16;
pub const ROUTE_LOOKAHEAD: [f64; 4] = [5.0, 10.0, 20.0, 40.0];
pub const EDGE_SAMPLE_SPACING: f64 = 3.0;

pub const EGO_OFFSET: usize = 0;
pub const AGENT_OFFSET: usize = 2;
pub const EDGE_OFFSET: usize = AGENT_OFFSET + MAX_AGENTS * AGENT_FEATURES;
pub const ROUTE_OFFSET: usize = EDGE_OFFSET + 2 * EDGE_POINTS;
pub const MASK_OFFSET: usize = ROUTE_OFFSET + 2 * ROUTE_LOOKAHEAD.len();
/// Observation length: ego (2) + agents (56) + edges (32) + route (8) + mask (8).
pub const OBS_DIM: usize = MASK_OFFSET + MAX_AGENTS;

/// Immutable feature vector in physical units (meters, m/s, radians).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation(Arc<[f32]>);

impl Observation {
    pub fn from_vec(v: Vec<f32>) -> Self {
        assert_eq!(v.len(), OBS_DIM, "observation length");
        Self(v.into())
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn speed(&self) -> f32 {
        self.0[EGO_OFFSET]
    }

    /// Writes the network input (unit-scaled features) into `out`.
    pub fn write_scaled(&self, out: &mut [f64]) {
        for (i, (o, &x)) in out.iter_mut().zip(self.0.iter()).enumerate() {
            *o = x as f64 * feature_scale(i);
        }
    }
}

/// Multiplicative input scaling applied before the networks.
pub fn feature_scale(i: usize) -> f64 {
    match i {
        0 => 0.1,
        1 => 1.0,
        i if i < EDGE_OFFSET => match (i - AGENT_OFFSET) % AGENT_FEATURES {
            0 | 1 => 0.05,
            2 | 3 => 1.0,
            4 => 0.1,
            5 => 0.2,
            _ => 0.5,
        },
        i if i < MASK_OFFSET => 0.05,
        _ => 1.0,
    }
}

/// Scenario data that featurization reuses every step.
#[derive(Debug)]
pub struct PreparedScenario {
    pub scenario: Scenario,
    pub route: Polyline,
    pub edge_samples: Vec<Point>,
    pub expert_progress: f64,
}

impl PreparedScenario {
    pub fn new(scenario: Scenario) -> Arc<Self> {
        let route = scenario.route_polyline();
        let mut edge_samples = Vec::new();
        for line in &scenario.roadgraph.road_edges {
            if let Ok(poly) = Polyline::new(line.clone()) {
                let n = (poly.length() / EDGE_SAMPLE_SPACING).ceil() as usize;
                edge_samples.extend((0..=n).map(|k| poly.point_at(k as f64 * EDGE_SAMPLE_SPACING)));
            }
        }
        let expert_progress = scenario.expert_progress();
        Arc::new(Self { scenario, route, edge_samples, expert_progress })
    }
}

fn agent_speed(agent: &AgentTrack, t: usize, dt: f64) -> f64 {
    agent.velocity(t, dt).map_or(0.0, |v| v[0].hypot(v[1]))
}

pub fn featurize(prep: &PreparedScenario, ego: &EgoState, t: usize) -> Observation {
    let scenario = &prep.scenario;
    let mut f = vec![0.0f32; OBS_DIM];
    let origin = ego.position();
    let local = |p: Point| to_local([p[0] - origin[0], p[1] - origin[1]], ego.heading);

    f[EGO_OFFSET] = ego.speed as f32;
    let goal = local(scenario.goal);
    f[EGO_OFFSET + 1] = goal[1].atan2(goal[0]) as f32;

    let mut nearby: Vec<(f64, usize)> = scenario
        .agents
        .iter()
        .enumerate()
        .filter_map(|(i, a)| {
            a.at(t).map(|b| {
                let d = local(b.center());
                (d[0] * d[0] + d[1] * d[1], i)
            })
        })
        .collect();
    nearby.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (slot, &(_, i)) in nearby.iter().take(MAX_AGENTS).enumerate() {
        let agent = &scenario.agents[i];
        let b = agent.at(t).unwrap();
        let rel = local(b.center());
        let (s, c) = (b.heading - ego.heading).sin_cos();
        let base = AGENT_OFFSET + slot * AGENT_FEATURES;
        let values = [rel[0], rel[1], s, c, agent_speed(agent, t, scenario.dt), b.length, b.width];
        for (k, v) in values.into_iter().enumerate() {
            f[base + k] = v as f32;
        }
        f[MASK_OFFSET + slot] = 1.0;
    }

    let mut edges: Vec<(f64, Point)> = prep
        .edge_samples
        .iter()
        .map(|&p| {
            let d = local(p);
            (d[0] * d[0] + d[1] * d[1], d)
        })
        .collect();
    let k = EDGE_POINTS.min(edges.len());
    if edges.len() > k {
        edges.select_nth_unstable_by(k, |a, b| a.0.total_cmp(&b.0));
        edges.truncate(k);
    }
    // Quantized distance keeps the order of mirror-symmetric points stable
    // under floating-point noise.
    let key = |d2: f64| (d2 * 1e4).round();
    edges.sort_by(|a, b| {
        key(a.0).total_cmp(&key(b.0)).then(a.1[1].total_cmp(&b.1[1])).then(a.1[0].total_cmp(&b.1[0]))
    });
    for (slot, (_, d)) in edges.into_iter().enumerate() {
        f[EDGE_OFFSET + 2 * slot] = d[0] as f32;
        f[EDGE_OFFSET + 2 * slot + 1] = d[1] as f32;
    }

    let s = prep.route.project(origin);
    for (slot, ahead) in ROUTE_LOOKAHEAD.iter().enumerate() {
        let p = local(prep.route.point_at(s + ahead));
        f[ROUTE_OFFSET + 2 * slot] = p[0] as f32;
        f[ROUTE_OFFSET + 2 * slot + 1] = p[1] as f32;
    }
    Observation::from_vec(f)
}
