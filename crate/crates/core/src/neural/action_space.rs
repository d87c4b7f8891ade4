use crate::dynamics::{Action, ACCEL_MAX, ACCEL_MIN, STEER_LIMIT};

pub const ACTION_DIM: usize = 2;
pub const ACTION_CENTER: [f64; 2] = [0.0, 0.5 * (ACCEL_MAX + ACCEL_MIN)];
pub const ACTION_HALF_RANGE: [f64; 2] = [STEER_LIMIT, 0.5 * (ACCEL_MAX - ACCEL_MIN)];
/// Squashed outputs are kept this far inside ±1 so actions stay strictly in-box.
pub const SQUASH_MARGIN: f64 = 1e-9;
/// Margin used when mapping boundary actions back through the squash.
pub const INVERSE_MARGIN: f64 = 1e-6;

/// Maps a normalized point of `[-1, 1]²` to the action box.
pub fn from_unit(y: [f64; 2]) -> Action {
    Action::new(
        ACTION_CENTER[0] + ACTION_HALF_RANGE[0] * y[0],
        ACTION_CENTER[1] + ACTION_HALF_RANGE[1] * y[1],
    )
}

pub fn to_unit(a: &Action) -> [f64; 2] {
    [
        (a.steer - ACTION_CENTER[0]) / ACTION_HALF_RANGE[0],
        (a.accel - ACTION_CENTER[1]) / ACTION_HALF_RANGE[1],
    ]
}

/// `ln(1 − tanh²u)`, stable for large `|u|`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    let a = u.abs();
    2.0 * (std::f64::consts::LN_2 - a - softplus(-2.0 * a))
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Sum of `ln(half range)` over action dimensions.
pub fn log_range_jacobian() -> f64 {
    ACTION_HALF_RANGE.iter().map(|h| h.ln()).sum()
}
