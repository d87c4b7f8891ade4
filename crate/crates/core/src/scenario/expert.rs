//! Scripted expert: pure-pursuit lateral control along a lateral-offset path
//! and IDM longitudinal control against constant-velocity predictions of the
//! logged agents.

use super::AgentTrack;
use crate::dynamics::{
    forward_step, to_local, Action, EgoState, OrientedBox, VehicleGeometry, ACCEL_MAX, ACCEL_MIN,
    STEER_LIMIT,
};

/// A smooth lateral displacement over `[start, end]` with cosine ramps.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Nudge {
    pub start: f64,
    pub end: f64,
    pub offset: f64,
    pub ramp: f64,
}

impl Nudge {
    fn weight(&self, x: f64) -> f64 {
        let up = ((x - (self.start - self.ramp)) / self.ramp).clamp(0.0, 1.0);
        let down = (((self.end + self.ramp) - x) / self.ramp).clamp(0.0, 1.0);
        let s = up.min(down);
        0.5 - 0.5 * (std::f64::consts::PI * s).cos()
    }
}

/// Path along +x described by a lateral offset `y(x)`.
#[derive(Debug, Clone)]
pub(crate) struct LateralPath {
    pub base_y: f64,
    pub nudges: Vec<Nudge>,
}

impl LateralPath {
    pub fn straight(base_y: f64) -> Self {
        Self { base_y, nudges: Vec::new() }
    }

    pub fn y(&self, x: f64) -> f64 {
        let mut up: f64 = 0.0;
        let mut down: f64 = 0.0;
        for n in &self.nudges {
            let v = n.offset * n.weight(x);
            up = up.max(v);
            down = down.min(v);
        }
        self.base_y + up + down
    }

    pub fn heading(&self, x: f64) -> f64 {
        let h = 0.05;
        ((self.y(x + h) - self.y(x - h)) / (2.0 * h)).atan()
    }

    pub fn pose_at(&self, x: f64) -> (f64, f64) {
        (self.y(x), self.heading(x))
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct IdmParams {
    pub desired_speed: f64,
    pub headway: f64,
    pub min_gap: f64,
    pub max_accel: f64,
    pub comfort_decel: f64,
}

impl IdmParams {
    pub fn free(&self, v: f64) -> f64 {
        self.max_accel * (1.0 - (v / self.desired_speed).powi(4))
    }

    pub fn accel(&self, v: f64, gap: f64, closing: f64) -> f64 {
        let dynamic = v * self.headway + v * closing / (2.0 * (self.max_accel * self.comfort_decel).sqrt());
        let s_star = self.min_gap + dynamic.max(0.0);
        self.free(v) - self.max_accel * (s_star / gap.max(0.1)).powi(2)
    }
}

pub(crate) struct ExpertDriver<'a> {
    pub path: &'a LateralPath,
    pub idm: IdmParams,
    pub agents: &'a [AgentTrack],
    pub geometry: VehicleGeometry,
    pub dt: f64,
}

const PREDICTION_STEPS: usize = 16;
const PREDICTION_DT: f64 = 0.25;
const CORRIDOR_MARGIN: f64 = 0.15;

struct Occupancy {
    tau: f64,
    x_lo: f64,
    x_hi: f64,
}

impl ExpertDriver<'_> {
    fn steer(&self, state: &EgoState) -> f64 {
        let lookahead = (3.0 + 0.5 * state.speed).clamp(4.0, 12.0);
        let tx = state.x + lookahead;
        let target = [tx - state.x, self.path.y(tx) - state.y];
        let local = to_local(target, state.heading);
        let alpha = local[1].atan2(local[0]);
        let dist = local[0].hypot(local[1]).max(1e-3);
        (2.0 * self.geometry.wheelbase * alpha.sin() / dist).atan().clamp(-STEER_LIMIT, STEER_LIMIT)
    }

    fn occupancy(&self, b: &OrientedBox, vel: [f64; 2]) -> Vec<Occupancy> {
        let half = 0.5 * self.geometry.width + CORRIDOR_MARGIN;
        (0..=PREDICTION_STEPS)
            .filter_map(|k| {
                let tau = k as f64 * PREDICTION_DT;
                let moved = OrientedBox { cx: b.cx + vel[0] * tau, cy: b.cy + vel[1] * tau, ..*b };
                let corners = moved.corners();
                let (mut lat_lo, mut lat_hi) = (f64::INFINITY, f64::NEG_INFINITY);
                let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for c in corners {
                    let lat = c[1] - self.path.y(c[0]);
                    lat_lo = lat_lo.min(lat);
                    lat_hi = lat_hi.max(lat);
                    x_lo = x_lo.min(c[0]);
                    x_hi = x_hi.max(c[0]);
                }
                (lat_lo < half && lat_hi > -half).then_some(Occupancy { tau, x_lo, x_hi })
            })
            .collect()
    }

    fn accel(&self, state: &EgoState, t: usize) -> f64 {
        let v = state.speed;
        let front = state.x + self.geometry.length - self.geometry.rear_overhang;
        let rear = state.x - self.geometry.rear_overhang;
        let v_eff = v.max(3.0);
        let mut accel = self.idm.free(v);
        for agent in self.agents {
            let (Some(b), Some(vel)) = (agent.at(t), agent.velocity(t, self.dt)) else {
                continue;
            };
            let occ = self.occupancy(b, vel);
            let Some(first) = occ.first() else { continue };
            let speed = vel[0].hypot(vel[1]);
            let x_hi = occ.iter().map(|o| o.x_hi).fold(f64::NEG_INFINITY, f64::max);
            if x_hi < rear {
                continue;
            }
            if first.tau == 0.0 && vel[0] > 1.0 && vel[0] > 0.7 * speed {
                if first.x_lo > rear {
                    accel = accel.min(self.idm.accel(v, first.x_lo - front, v - vel[0]));
                }
                continue;
            }
            let x_lo = occ.iter().map(|o| o.x_lo).fold(f64::INFINITY, f64::min);
            let tau_in = first.tau;
            let last = occ.last().unwrap();
            let tau_out = if last.tau >= PREDICTION_STEPS as f64 * PREDICTION_DT {
                f64::INFINITY
            } else {
                last.tau
            };
            let gap = x_lo - front;
            let t_reach = gap.max(0.0) / v_eff;
            let t_clear = (x_hi - rear).max(0.0) / v_eff;
            if t_reach <= tau_out + 1.0 && t_clear >= tau_in - 1.0 && gap > -1.0 {
                accel = accel.min(self.idm.accel(v, gap, v));
            }
        }
        accel
    }

    pub fn action(&self, state: &EgoState, t: usize) -> Action {
        Action::new(self.steer(state), self.accel(state, t).clamp(ACCEL_MIN, ACCEL_MAX))
    }

    /// Rolls the expert from `init` for `horizon` steps.
    pub fn rollout(&self, init: EgoState, horizon: usize) -> Vec<EgoState> {
        let mut track = Vec::with_capacity(horizon + 1);
        track.push(init);
        for t in 0..horizon {
            let s = track[t];
            let next = forward_step(&s, &self.action(&s, t), &self.geometry, self.dt)
                .expect("finite expert state");
            track.push(next);
        }
        track
    }
}

/// Longitudinal log of a vehicle following the ego track along `path` with IDM.
pub(crate) fn follower_track(
    ego: &[EgoState],
    geometry: &VehicleGeometry,
    path: &LateralPath,
    idm: IdmParams,
    start_gap: f64,
    length: f64,
    width: f64,
    dt: f64,
) -> Vec<Option<OrientedBox>> {
    let ego_rear = |s: &EgoState| s.x - geometry.rear_overhang;
    let mut x = ego_rear(&ego[0]) - start_gap - 0.5 * length;
    let mut v = ego[0].speed;
    let mut out = Vec::with_capacity(ego.len());
    for s in ego {
        let (y, h) = path.pose_at(x);
        out.push(Some(OrientedBox::new(x, y, h, length, width)));
        let gap = ego_rear(s) - (x + 0.5 * length);
        let a = idm.accel(v, gap, v - s.speed).clamp(-6.0, 2.0);
        x += v * dt;
        v = (v + a * dt).max(0.0);
    }
    out
}
