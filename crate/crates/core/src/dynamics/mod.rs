//! Kinematic bicycle model, inverse-dynamics action recovery and the
//! geometric primitives built on top of them.

mod geometry;

pub use geometry::{
    distance, min_separation, project_onto_route, signed_distance_point,
    signed_distance_to_road_edge, to_local, GeometryError, OrientedBox, Point, Polyline,
};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub const STEER_LIMIT: f64 = 0.3;
pub const ACCEL_MIN: f64 = -4.0;
pub const ACCEL_MAX: f64 = 2.0;

/// Mean squared corner residual above which a boundary solution is reported
/// as an infeasible expert transition.
pub const INFEASIBLE_RESIDUAL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
}

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    let wrapped = (a + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        PI
    } else {
        wrapped
    }
}

/// Pose and speed of the controlled vehicle, referenced at the rear axle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EgoState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

impl EgoState {
    pub fn new(x: f64, y: f64, heading: f64, speed: f64) -> Self {
        Self { x, y, heading: normalize_angle(heading), speed }
    }

    pub fn position(&self) -> Point {
        [self.x, self.y]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite() && self.speed.is_finite()
    }
}

/// Tire angle (rad) and longitudinal acceleration (m/s²).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub steer: f64,
    pub accel: f64,
}

impl Action {
    pub const ZERO: Action = Action { steer: 0.0, accel: 0.0 };

    pub fn new(steer: f64, accel: f64) -> Self {
        Self { steer, accel }
    }

    pub fn clamped(self) -> Self {
        Self {
            steer: self.steer.clamp(-STEER_LIMIT, STEER_LIMIT),
            accel: self.accel.clamp(ACCEL_MIN, ACCEL_MAX),
        }
    }

    pub fn in_bounds(&self) -> bool {
        (-STEER_LIMIT..=STEER_LIMIT).contains(&self.steer)
            && (ACCEL_MIN..=ACCEL_MAX).contains(&self.accel)
    }

    pub fn is_finite(&self) -> bool {
        self.steer.is_finite() && self.accel.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleGeometry {
    pub length: f64,
    pub width: f64,
    pub wheelbase: f64,
    /// Distance from the rear bumper to the rear axle.
    pub rear_overhang: f64,
}

impl Default for VehicleGeometry {
    fn default() -> Self {
        Self { length: 4.8, width: 2.1, wheelbase: 3.0, rear_overhang: 1.0 }
    }
}

impl VehicleGeometry {
    /// Body rectangle for a rear-axle referenced state.
    pub fn body_box(&self, state: &EgoState) -> OrientedBox {
        let offset = 0.5 * self.length - self.rear_overhang;
        let (s, c) = state.heading.sin_cos();
        OrientedBox::new(
            state.x + offset * c,
            state.y + offset * s,
            state.heading,
            self.length,
            self.width,
        )
    }
}

fn check_step_inputs(state: &EgoState, action: &Action, dt: f64) -> Result<(), DynamicsError> {
    if !state.is_finite() {
        return Err(DynamicsError::NonFinite("state"));
    }
    if !action.is_finite() {
        return Err(DynamicsError::NonFinite("action"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::BadTimeStep(dt));
    }
    Ok(())
}

#[inline]
fn step_unchecked(state: &EgoState, action: &Action, wheelbase: f64, dt: f64) -> EgoState {
    let (s, c) = state.heading.sin_cos();
    EgoState {
        x: state.x + state.speed * c * dt,
        y: state.y + state.speed * s * dt,
        heading: normalize_angle(state.heading + state.speed / wheelbase * action.steer.tan() * dt),
        speed: (state.speed + action.accel * dt).max(0.0),
    }
}

/// Explicit-Euler rear-axle bicycle update. Position advances with the
/// current speed and heading, then heading and speed are updated. Bounds are
/// the caller's responsibility.
pub fn forward_step(
    state: &EgoState,
    action: &Action,
    geometry: &VehicleGeometry,
    dt: f64,
) -> Result<EgoState, DynamicsError> {
    check_step_inputs(state, action, dt)?;
    Ok(step_unchecked(state, action, geometry.wheelbase, dt))
}

/// Body corners (front-left, front-right, rear-right, rear-left).
pub fn corner_positions(state: &EgoState, geometry: &VehicleGeometry) -> [Point; 4] {
    geometry.body_box(state).corners()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseSolution {
    pub action: Action,
    /// Mean squared corner residual at the solution, m².
    pub residual: f64,
    /// The optimum sits on the action box boundary with a residual above
    /// [`INFEASIBLE_RESIDUAL`].
    pub infeasible: bool,
}

/// Corner residual between a candidate and observed next state.
///
/// Pose alone does not see acceleration under the Euler update, so each
/// state is also compared one zero-action step ahead: its corners there
/// carry the speed.
struct CornerObjective {
    prev: EgoState,
    target: [Point; 8],
    geometry: VehicleGeometry,
    dt: f64,
}

impl CornerObjective {
    fn new(prev: &EgoState, next: &EgoState, geometry: &VehicleGeometry, dt: f64) -> Self {
        // Work relative to the previous position to keep residuals exact.
        let origin = [prev.x, prev.y];
        let rel = |s: &EgoState| EgoState { x: s.x - origin[0], y: s.y - origin[1], ..*s };
        let next = rel(next);
        Self {
            prev: rel(prev),
            target: Self::points(&next, geometry, dt),
            geometry: *geometry,
            dt,
        }
    }

    fn points(state: &EgoState, geometry: &VehicleGeometry, dt: f64) -> [Point; 8] {
        let ahead = step_unchecked(state, &Action::ZERO, geometry.wheelbase, dt);
        let a = corner_positions(state, geometry);
        let b = corner_positions(&ahead, geometry);
        [a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3]]
    }

    fn eval(&self, action: &Action) -> f64 {
        let next = step_unchecked(&self.prev, action, self.geometry.wheelbase, self.dt);
        let pts = Self::points(&next, &self.geometry, self.dt);
        pts.iter()
            .zip(self.target.iter())
            .map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2))
            .sum::<f64>()
            / 8.0
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const LINE_TOL: f64 = 1e-10;
const SWEEP_BUDGET: usize = 64;
const MSE_TOL: f64 = 1e-6;

fn golden_section(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > LINE_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    // Endpoints are not probed by the interior search; boundary optima matter.
    let mid = 0.5 * (a + b);
    [lo, hi, mid]
        .into_iter()
        .map(|x| (f(x), x))
        .fold((f64::INFINITY, mid), |best, cand| if cand.0 < best.0 { cand } else { best })
        .1
}

/// Recovers the in-bounds action whose forward step best reproduces the
/// observed next state, by coordinate descent with golden-section line
/// searches over the action box.
pub fn inverse_action(
    prev: &EgoState,
    next_observed: &EgoState,
    geometry: &VehicleGeometry,
    dt: f64,
) -> Result<InverseSolution, DynamicsError> {
    if !prev.is_finite() {
        return Err(DynamicsError::NonFinite("previous state"));
    }
    if !next_observed.is_finite() {
        return Err(DynamicsError::NonFinite("next state"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::BadTimeStep(dt));
    }
    let objective = CornerObjective::new(prev, next_observed, geometry, dt);

    // Closed-form guesses seed the search; they are exact for interior actions
    // up to rounding and the search only refines them.
    let steer_guess = if prev.speed > 0.0 {
        let dtheta = normalize_angle(next_observed.heading - prev.heading);
        (dtheta * geometry.wheelbase / (prev.speed * dt)).atan()
    } else {
        0.0
    };
    let mut action = Action::new(steer_guess, (next_observed.speed - prev.speed) / dt).clamped();
    let mut best = objective.eval(&action);

    for _ in 0..SWEEP_BUDGET {
        let before = action;
        let steer = golden_section(-STEER_LIMIT, STEER_LIMIT, |s| {
            objective.eval(&Action::new(s, action.accel))
        });
        let cand = Action::new(steer, action.accel);
        let f = objective.eval(&cand);
        if f <= best {
            action = cand;
            best = f;
        }
        let accel = golden_section(ACCEL_MIN, ACCEL_MAX, |a| {
            objective.eval(&Action::new(action.steer, a))
        });
        let cand = Action::new(action.steer, accel);
        let f = objective.eval(&cand);
        if f <= best {
            action = cand;
            best = f;
        }
        let moved = (action.steer - before.steer).abs() + (action.accel - before.accel).abs();
        if moved < LINE_TOL || best < MSE_TOL * 1e-18 {
            break;
        }
    }

    // Steering is unobservable at standstill.
    if prev.speed <= 0.0 {
        action.steer = 0.0;
    }
    // Any braking that saturates at zero speed is equivalent; keep the mildest.
    if prev.speed + action.accel * dt <= 0.0 {
        let mildest = (-prev.speed / dt).max(ACCEL_MIN);
        let cand = Action::new(action.steer, mildest);
        if objective.eval(&cand) <= best {
            action = cand;
        }
    }
    let residual = objective.eval(&action);
    let on_boundary = (action.steer.abs() - STEER_LIMIT).abs() < 1e-7
        || (action.accel - ACCEL_MIN).abs() < 1e-7
        || (action.accel - ACCEL_MAX).abs() < 1e-7;
    Ok(InverseSolution {
        action,
        residual,
        infeasible: on_boundary && residual > INFEASIBLE_RESIDUAL,
    })
}
