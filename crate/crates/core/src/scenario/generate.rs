//! Deterministic synthetic scenario suites.

use super::expert::{follower_track, ExpertDriver, IdmParams, LateralPath, Nudge};
use super::io::quantize;
use super::{
    AgentKind, AgentTrack, Roadgraph, Scenario, ScenarioError, ScenarioTags, Template, HORIZON,
    SCENARIO_DT,
};
use crate::dynamics::{EgoState, OrientedBox, Point, VehicleGeometry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

/// Scenarios per seed family.
pub const FAMILY_SIZE: usize = 10;
const MAX_ATTEMPTS: usize = 20;
const X_MIN: f64 = -60.0;
const X_MAX: f64 = 320.0;
const LANE: f64 = 3.5;
const MIN_EXPERT_GAP: f64 = 0.25;
const MAX_EXPERT_EDGE: f64 = -0.1;
const MIN_EXPERT_PROGRESS: f64 = 10.0;

pub(crate) fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn straight_edges(y_lo: f64, y_hi: f64) -> Vec<Vec<Point>> {
    vec![vec![[X_MIN, y_lo], [X_MAX, y_lo]], vec![[X_MAX, y_hi], [X_MIN, y_hi]]]
}

fn crossing_edges(y_lo: f64, y_hi: f64, x_l: f64, x_r: f64) -> Vec<Vec<Point>> {
    let far = 150.0;
    vec![
        vec![[X_MIN, y_lo], [x_l, y_lo], [x_l, -far]],
        vec![[x_r, -far], [x_r, y_lo], [X_MAX, y_lo]],
        vec![[X_MAX, y_hi], [x_r, y_hi], [x_r, far]],
        vec![[x_l, far], [x_l, y_hi], [X_MIN, y_hi]],
    ]
}

fn lane_line(y: f64) -> Vec<Point> {
    vec![[X_MIN, y], [X_MAX, y]]
}

fn vehicle_size(rng: &mut ChaCha8Rng) -> (f64, f64) {
    (rng.random_range(4.2..5.2), rng.random_range(1.8..2.1))
}

/// Agent moving along a straight line with a per-step speed profile.
fn line_track(
    start: Point,
    heading: f64,
    length: f64,
    width: f64,
    speed: impl Fn(usize) -> f64,
    dt: f64,
) -> Vec<Option<OrientedBox>> {
    let (s, c) = heading.sin_cos();
    let mut d = 0.0;
    (0..=HORIZON)
        .map(|t| {
            let b = OrientedBox::new(start[0] + d * c, start[1] + d * s, heading, length, width);
            d += speed(t) * dt;
            Some(b)
        })
        .collect()
}

fn parked(x: f64, y: f64, length: f64, width: f64) -> Vec<Option<OrientedBox>> {
    vec![Some(OrientedBox::new(x, y, 0.0, length, width)); HORIZON + 1]
}

/// Everything a template builds before the expert is rolled out.
struct Layout {
    edges: Vec<Vec<Point>>,
    lanes: Vec<Vec<Point>>,
    path: LateralPath,
    route_y: f64,
    agents: Vec<(AgentKind, Vec<Option<OrientedBox>>)>,
    idm: IdmParams,
    init_speed: f64,
    /// (start gap, length, width) of an optional follower behind the ego.
    follower: Option<(f64, f64, f64)>,
}

fn expert_idm(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> IdmParams {
    IdmParams {
        desired_speed: rng.random_range(lo..hi),
        headway: rng.random_range(1.0..1.6),
        min_gap: rng.random_range(2.0..3.5),
        max_accel: rng.random_range(1.0..1.8),
        comfort_decel: rng.random_range(1.8..2.8),
    }
}

fn maybe_follower(rng: &mut ChaCha8Rng, prob: f64) -> Option<(f64, f64, f64)> {
    if rng.random_bool(prob) {
        let (l, w) = vehicle_size(rng);
        Some((rng.random_range(8.0..20.0), l, w))
    } else {
        None
    }
}

fn straight_cruise(rng: &mut ChaCha8Rng, dt: f64) -> Option<Layout> {
    let lane_y = -0.5 * LANE;
    let idm = expert_idm(rng, 9.0, 14.0);
    let init_speed = idm.desired_speed * rng.random_range(0.8..1.0);
    let geometry = VehicleGeometry::default();
    let mut agents = Vec::new();
    if rng.random_bool(0.85) {
        let (l, w) = vehicle_size(rng);
        let gap = rng.random_range(8.0..40.0);
        let cruise = rng.random_range(5.0..13.0);
        let brake_at = rng.random_range(1.0..7.0);
        let decel = rng.random_range(0.5..5.0);
        let brake_for = rng.random_range(0.5..3.0);
        let x = geometry.length - geometry.rear_overhang + gap + 0.5 * l;
        let mut profile = Vec::with_capacity(HORIZON + 1);
        let mut v: f64 = cruise;
        for t in 0..=HORIZON {
            profile.push(v);
            let time = t as f64 * dt;
            let a = if time >= brake_at && time < brake_at + brake_for {
                -decel
            } else if time >= brake_at + brake_for && v < cruise {
                1.0
            } else {
                0.0
            };
            v = (v + a * dt).clamp(0.0, cruise);
        }
        agents.push((AgentKind::Vehicle, line_track([x, lane_y], 0.0, l, w, |t| profile[t], dt)));
    }
    let mut x = rng.random_range(-40.0..0.0);
    for _ in 0..rng.random_range(0..=3) {
        let (l, w) = vehicle_size(rng);
        let v = rng.random_range(8.0..14.0);
        agents.push((AgentKind::Vehicle, line_track([x, 0.5 * LANE], 0.0, l, w, |_| v, dt)));
        x += rng.random_range(15.0..45.0);
    }
    Some(Layout {
        edges: straight_edges(-LANE, LANE),
        lanes: vec![lane_line(lane_y), lane_line(0.5 * LANE)],
        path: LateralPath::straight(lane_y),
        route_y: lane_y,
        agents,
        idm,
        init_speed,
        follower: maybe_follower(rng, 0.4),
    })
}

fn narrow_passage(rng: &mut ChaCha8Rng, _dt: f64) -> Option<Layout> {
    let width = rng.random_range(5.8..7.2);
    let half = 0.5 * width;
    let ego_half = 0.5 * VehicleGeometry::default().width;
    let idm = expert_idm(rng, 6.0, 11.0);
    let init_speed = idm.desired_speed * rng.random_range(0.8..1.0);
    let mut agents = Vec::new();
    let mut nudges = Vec::new();
    let ramp = 14.0;
    let mut x = rng.random_range(15.0..40.0);
    for _ in 0..rng.random_range(2..=4) {
        let (l, w) = vehicle_size(rng);
        let left = rng.random_bool(0.3);
        let curb = rng.random_range(0.1..0.4);
        let clearance = rng.random_range(0.3..1.4);
        let (cy, offset) = if left {
            let cy = half - curb - 0.5 * w;
            (cy, (cy - 0.5 * w - clearance - ego_half).min(0.0))
        } else {
            let cy = -half + curb + 0.5 * w;
            (cy, (cy + 0.5 * w + clearance + ego_half).max(0.0))
        };
        // The passing line must keep the ego on the road.
        if offset.abs() + ego_half > half - 0.3 {
            return None;
        }
        agents.push((AgentKind::Vehicle, parked(x + 0.5 * l, cy, l, w)));
        nudges.push(Nudge { start: x - 3.0, end: x + l + 2.0, offset, ramp });
        x += l + rng.random_range(4.0..30.0);
    }
    // Opposite-side nudges that overlap cannot both be satisfied.
    for a in &nudges {
        for b in &nudges {
            let overlap = a.start - a.ramp < b.end + b.ramp && b.start - b.ramp < a.end + a.ramp;
            if overlap && a.offset * b.offset < 0.0 {
                return None;
            }
        }
    }
    Some(Layout {
        edges: straight_edges(-half, half),
        lanes: vec![lane_line(0.0)],
        path: LateralPath { base_y: 0.0, nudges },
        route_y: 0.0,
        agents,
        idm,
        init_speed,
        follower: None,
    })
}

fn oncoming_squeeze(rng: &mut ChaCha8Rng, dt: f64) -> Option<Layout> {
    let width = rng.random_range(6.6..7.6);
    let half = 0.5 * width;
    let lane_y = -0.25 * width;
    let ego_half = 0.5 * VehicleGeometry::default().width;
    let idm = expert_idm(rng, 7.0, 12.0);
    let init_speed = idm.desired_speed * rng.random_range(0.8..1.0);
    let x_p = rng.random_range(30.0..70.0);
    let (l, w) = (rng.random_range(4.3..5.5), 2.0);
    let cy = lane_y + rng.random_range(-0.3..0.2);
    let clearance = rng.random_range(0.4..1.2);
    let pass_y = cy + 0.5 * w + clearance + ego_half;
    if pass_y + ego_half > half - 0.3 {
        return None;
    }
    let mut agents = vec![(AgentKind::Vehicle, parked(x_p + 0.5 * l, cy, l, w))];
    let nudges = vec![Nudge { start: x_p - 3.0, end: x_p + l + 2.0, offset: pass_y - lane_y, ramp: 14.0 }];
    let meet = rng.random_range(1.5..7.0);
    let mut lead_x = None;
    for _ in 0..rng.random_range(1..=3) {
        let (ol, ow) = vehicle_size(rng);
        let v = rng.random_range(7.0..12.0);
        let x0 = lead_x.map_or(x_p + v * meet, |x: f64| x + rng.random_range(15.0..40.0));
        lead_x = Some(x0);
        let y = -lane_y + rng.random_range(-0.2..0.2);
        agents.push((AgentKind::Vehicle, line_track([x0, y], std::f64::consts::PI, ol, ow, |_| v, dt)));
    }
    Some(Layout {
        edges: straight_edges(-half, half),
        lanes: vec![lane_line(lane_y), lane_line(-lane_y)],
        path: LateralPath { base_y: lane_y, nudges },
        route_y: lane_y,
        agents,
        idm,
        init_speed,
        follower: maybe_follower(rng, 0.3),
    })
}

fn intersection_crossing(rng: &mut ChaCha8Rng, dt: f64) -> Option<Layout> {
    let lane_y = -0.5 * LANE;
    let x0 = rng.random_range(35.0..75.0);
    let idm = expert_idm(rng, 8.0, 13.0);
    let init_speed = idm.desired_speed * rng.random_range(0.8..1.0);
    let mut agents = Vec::new();
    for _ in 0..rng.random_range(1..=4) {
        let (l, w) = vehicle_size(rng);
        let v = rng.random_range(7.0..13.0);
        let arrive = rng.random_range(0.5..8.0);
        let north = rng.random_bool(0.5);
        let (x, y0, heading) = if north {
            (x0 + 0.5 * LANE, -v * arrive, FRAC_PI_2)
        } else {
            (x0 - 0.5 * LANE, v * arrive, -FRAC_PI_2)
        };
        agents.push((AgentKind::Vehicle, line_track([x, y0], heading, l, w, |_| v, dt)));
    }
    for _ in 0..rng.random_range(0..=2) {
        let (l, w) = vehicle_size(rng);
        let v = rng.random_range(7.0..12.0);
        let x = rng.random_range(40.0..160.0);
        agents.push((AgentKind::Vehicle, line_track([x, -lane_y], std::f64::consts::PI, l, w, |_| v, dt)));
    }
    Some(Layout {
        edges: crossing_edges(-LANE, LANE, x0 - LANE, x0 + LANE),
        lanes: vec![
            lane_line(lane_y),
            lane_line(-lane_y),
            vec![[x0 + 0.5 * LANE, -150.0], [x0 + 0.5 * LANE, 150.0]],
            vec![[x0 - 0.5 * LANE, 150.0], [x0 - 0.5 * LANE, -150.0]],
        ],
        path: LateralPath::straight(lane_y),
        route_y: lane_y,
        agents,
        idm,
        init_speed,
        follower: maybe_follower(rng, 0.6),
    })
}

fn pedestrian_emergence(rng: &mut ChaCha8Rng, dt: f64) -> Option<Layout> {
    let parking = rng.random_range(2.2..2.6);
    let width = parking + 2.0 * LANE;
    let half = 0.5 * width;
    let lane_y = -half + parking + 0.5 * LANE;
    let park_y = -half + 0.5 * parking;
    let geometry = VehicleGeometry::default();
    let idm = expert_idm(rng, 7.0, 12.0);
    let init_speed = idm.desired_speed * rng.random_range(0.85..1.0);
    let mut agents = Vec::new();
    let occluder_x = rng.random_range(35.0..80.0);
    let (ol, ow) = vehicle_size(rng);
    agents.push((AgentKind::Vehicle, parked(occluder_x, park_y, ol, ow)));
    let mut x = occluder_x - 0.5 * ol;
    for _ in 0..rng.random_range(1..=3) {
        let (l, w) = vehicle_size(rng);
        x -= l + rng.random_range(1.0..8.0);
        agents.push((AgentKind::Vehicle, parked(x + 0.5 * l, park_y, l, w)));
    }
    let ped_x = occluder_x + 0.5 * ol + rng.random_range(0.4..1.5);
    let ped_speed = rng.random_range(1.0..1.8);
    let warning = rng.random_range(14.0..40.0);
    let front = geometry.length - geometry.rear_overhang;
    let emerge = ((ped_x - warning - front) / init_speed).clamp(0.5, 8.0);
    let y_start = -half + parking - 0.4;
    let y_end = half + 2.0;
    let boxes = (0..=HORIZON)
        .map(|t| {
            let time = t as f64 * dt;
            if time < emerge {
                return None;
            }
            let y = y_start + ped_speed * (time - emerge);
            (y <= y_end).then(|| OrientedBox::new(ped_x, y, FRAC_PI_2, 0.6, 0.6))
        })
        .collect();
    agents.push((AgentKind::Pedestrian, boxes));
    for _ in 0..rng.random_range(0..=2) {
        let (l, w) = vehicle_size(rng);
        let v = rng.random_range(7.0..12.0);
        let x = rng.random_range(30.0..160.0);
        agents.push((AgentKind::Vehicle, line_track([x, lane_y + LANE], std::f64::consts::PI, l, w, |_| v, dt)));
    }
    Some(Layout {
        edges: straight_edges(-half, half),
        lanes: vec![lane_line(lane_y), lane_line(lane_y + LANE)],
        path: LateralPath::straight(lane_y),
        route_y: lane_y,
        agents,
        idm,
        init_speed,
        follower: maybe_follower(rng, 0.3),
    })
}

fn quantize_box(b: OrientedBox) -> OrientedBox {
    OrientedBox::new(quantize(b.cx), quantize(b.cy), quantize(b.heading), quantize(b.length), quantize(b.width))
}

fn attempt(template: Template, rng: &mut ChaCha8Rng, id: &str, tags: ScenarioTags) -> Option<Scenario> {
    let dt = quantize(SCENARIO_DT);
    let layout = match template {
        Template::StraightCruise => straight_cruise(rng, dt),
        Template::NarrowPassage => narrow_passage(rng, dt),
        Template::OncomingSqueeze => oncoming_squeeze(rng, dt),
        Template::IntersectionCrossing => intersection_crossing(rng, dt),
        Template::PedestrianEmergence => pedestrian_emergence(rng, dt),
    }?;
    let geometry = VehicleGeometry::default();
    let mut agents: Vec<AgentTrack> = layout
        .agents
        .into_iter()
        .enumerate()
        .map(|(i, (kind, boxes))| AgentTrack { id: i as u32 + 1, kind, boxes })
        .collect();

    let (y0, h0) = layout.path.pose_at(0.0);
    let init = EgoState::new(0.0, y0, h0, layout.init_speed);
    let driver = ExpertDriver { path: &layout.path, idm: layout.idm, agents: &agents, geometry, dt };
    let ego_track: Vec<EgoState> = driver
        .rollout(init, HORIZON)
        .into_iter()
        .map(|s| EgoState { x: quantize(s.x), y: quantize(s.y), heading: quantize(s.heading), speed: quantize(s.speed) })
        .collect();

    if let Some((gap, l, w)) = layout.follower {
        let idm = IdmParams {
            desired_speed: layout.idm.desired_speed + 1.0,
            headway: 1.4,
            min_gap: 3.0,
            max_accel: 1.5,
            comfort_decel: 2.5,
        };
        let boxes = follower_track(&ego_track, &geometry, &layout.path, idm, gap, l, w, dt);
        agents.push(AgentTrack { id: agents.len() as u32 + 1, kind: AgentKind::Vehicle, boxes });
    }
    for a in &mut agents {
        for b in a.boxes.iter_mut().flatten() {
            *b = quantize_box(*b);
        }
    }

    let q = |p: Point| [quantize(p[0]), quantize(p[1])];
    let route: Vec<Point> = vec![q([-20.0, layout.route_y]), q([X_MAX - 20.0, layout.route_y])];
    let scenario = Scenario {
        id: id.to_string(),
        dt,
        horizon: HORIZON,
        ego_track,
        agents,
        roadgraph: Roadgraph {
            road_edges: layout.edges.into_iter().map(|l| l.into_iter().map(q).collect()).collect(),
            lane_centers: layout.lanes.into_iter().map(|l| l.into_iter().map(q).collect()).collect(),
        },
        goal: *route.last().unwrap(),
        route,
        tags,
    };
    scenario.validate().ok()?;
    let clearance = scenario.expert_clearance();
    let ok = clearance.min_agent_gap >= MIN_EXPERT_GAP
        && clearance.max_edge_distance <= MAX_EXPERT_EDGE
        && scenario.expert_progress() >= MIN_EXPERT_PROGRESS;
    ok.then_some(scenario)
}

/// Builds one scenario, resampling template parameters until the scripted
/// expert is collision-free and on-road.
pub fn generate_scenario(
    template: Template,
    seed: u64,
    family: u64,
    id: &str,
) -> Result<Scenario, ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let tags = ScenarioTags { template, seed, family };
        if let Some(s) = attempt(template, &mut rng, id, tags) {
            return Ok(s);
        }
    }
    Err(ScenarioError::Generation { template, attempts: MAX_ATTEMPTS })
}

/// Generates `count` scenarios per template, in template order. Every
/// [`FAMILY_SIZE`] consecutive scenarios share a seed family.
pub fn generate_suite(mix_counts: &BTreeMap<Template, usize>, seed: u64) -> Result<Vec<Scenario>, ScenarioError> {
    let mut out = Vec::with_capacity(mix_counts.values().sum());
    let mut index = 0usize;
    for (&template, &count) in mix_counts {
        for _ in 0..count {
            let family = (index / FAMILY_SIZE) as u64;
            let scenario_seed = mix(mix(seed, family), index as u64);
            let id = format!("{}-{seed}-{index:05}", template.name());
            out.push(generate_scenario(template, scenario_seed, family, &id)?);
            index += 1;
        }
    }
    Ok(out)
}
