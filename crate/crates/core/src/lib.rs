//! Closed-loop driving simulation with log-playback agents, imitation and
//! soft actor-critic learners sharing one network stack, scenario difficulty
//! scoring, and evaluation utilities.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{} vs {} (tol {})", a, b, $tol);
    }};
}

pub mod dynamics;
pub mod difficulty;
pub mod envsim;
pub mod learners;
pub mod neural;
pub mod runtime;
pub mod scenario;
