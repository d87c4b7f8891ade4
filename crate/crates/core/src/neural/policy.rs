use super::action_space::*;
use super::Mlp;
use crate::dynamics::{Action, ACCEL_MAX, ACCEL_MIN, STEER_LIMIT};
use crate::envsim::Observation;
use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Unit-scaled network inputs, one row per observation.
pub fn observation_batch<'a>(obs: impl IntoIterator<Item = &'a Observation>) -> Array2<f64> {
    let obs: Vec<&Observation> = obs.into_iter().collect();
    let dim = obs.first().map_or(0, |o| o.as_slice().len());
    let mut out = Array2::zeros((obs.len(), dim));
    for (mut row, o) in out.rows_mut().into_iter().zip(obs) {
        o.write_scaled(row.as_slice_mut().expect("standard layout"));
    }
    out
}

/// Row-wise concatenation `[a | b]`.
pub fn concat_columns(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[a.view(), b.view()]).expect("matching rows")
}

/// Gaussian parameters for a batch; `log_std` is clamped.
#[derive(Debug, Clone)]
pub struct GaussianHead {
    pub mean: Array2<f64>,
    pub log_std: Array2<f64>,
    /// True where the raw log-stddev lies inside the clamp range.
    pub log_std_active: Array2<bool>,
}

/// Reparameterized sample `u = μ + σ·ε`, `y = tanh(u)`.
#[derive(Debug, Clone)]
pub struct SquashedSample {
    pub u: Array2<f64>,
    /// Normalized action in `(-1, 1)`.
    pub y: Array2<f64>,
    /// Log-density in action-box coordinates.
    pub log_prob: Array1<f64>,
}

impl GaussianHead {
    pub fn sample_with(&self, eps: &Array2<f64>) -> SquashedSample {
        let sigma = self.log_std.mapv(f64::exp);
        let u = &self.mean + &(&sigma * eps);
        let y = u.mapv(|v| v.tanh().clamp(-1.0 + SQUASH_MARGIN, 1.0 - SQUASH_MARGIN));
        let range = log_range_jacobian();
        let log_prob = Array1::from_shape_fn(u.nrows(), |i| {
            (0..ACTION_DIM)
                .map(|d| -0.5 * eps[[i, d]].powi(2) - self.log_std[[i, d]] - HALF_LN_2PI - log_one_minus_tanh_sq(u[[i, d]]))
                .sum::<f64>()
                - range
        });
        SquashedSample { u, y, log_prob }
    }

    /// Log-density of normalized actions `y` (clamped away from ±1).
    pub fn log_prob_of(&self, y: &Array2<f64>) -> Array1<f64> {
        let range = log_range_jacobian();
        Array1::from_shape_fn(y.nrows(), |i| {
            (0..ACTION_DIM)
                .map(|d| {
                    let u = clamp_unit(y[[i, d]]).atanh();
                    let z = (u - self.mean[[i, d]]) * (-self.log_std[[i, d]]).exp();
                    -0.5 * z * z - self.log_std[[i, d]] - HALF_LN_2PI - log_one_minus_tanh_sq(u)
                })
                .sum::<f64>()
                - range
        })
    }
}

pub fn clamp_unit(y: f64) -> f64 {
    y.clamp(-1.0 + INVERSE_MARGIN, 1.0 - INVERSE_MARGIN)
}

pub fn standard_normal<R: Rng + ?Sized>(rows: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn((rows, ACTION_DIM), |_| StandardNormal.sample(rng))
}

/// Tanh-squashed diagonal Gaussian policy over the action box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub net: Mlp,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * ACTION_DIM);
        Self { net: Mlp::new(&sizes, 1e-2, rng) }
    }

    pub fn head_from_output(output: &Array2<f64>) -> GaussianHead {
        let raw = output.slice(s![.., ACTION_DIM..]);
        GaussianHead {
            mean: output.slice(s![.., ..ACTION_DIM]).to_owned(),
            log_std: raw.mapv(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)),
            log_std_active: raw.mapv(|v| (LOG_STD_MIN..=LOG_STD_MAX).contains(&v)),
        }
    }

    pub fn head(&self, x: Array2<f64>) -> GaussianHead {
        Self::head_from_output(&self.net.predict(x))
    }

    /// Distribution mode pushed through the squash.
    pub fn mean_action(&self, obs: &Observation) -> Action {
        let head = self.head(observation_batch([obs]));
        from_unit([0, 1].map(|d| head.mean[[0, d]].tanh().clamp(-1.0 + SQUASH_MARGIN, 1.0 - SQUASH_MARGIN)))
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &Observation, rng: &mut R) -> (Action, f64) {
        let head = self.head(observation_batch([obs]));
        let s = head.sample_with(&standard_normal(1, rng));
        (from_unit([s.y[[0, 0]], s.y[[0, 1]]]), s.log_prob[0])
    }

    pub fn log_prob(&self, obs: &Observation, action: &Action) -> f64 {
        let head = self.head(observation_batch([obs]));
        let y = to_unit(action);
        head.log_prob_of(&Array2::from_shape_vec((1, 2), y.to_vec()).unwrap())[0]
    }
}

/// Uniform 31 × 7 grid over the action box, flattened steer-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DiscreteActionTable;

impl DiscreteActionTable {
    pub const STEER_BINS: usize = 31;
    pub const ACCEL_BINS: usize = 7;
    pub const SIZE: usize = Self::STEER_BINS * Self::ACCEL_BINS;

    pub fn steer_step() -> f64 {
        2.0 * STEER_LIMIT / (Self::STEER_BINS - 1) as f64
    }

    pub fn accel_step() -> f64 {
        (ACCEL_MAX - ACCEL_MIN) / (Self::ACCEL_BINS - 1) as f64
    }

    pub fn action(index: usize) -> Action {
        assert!(index < Self::SIZE, "bin {index} out of range");
        let (i, j) = (index / Self::ACCEL_BINS, index % Self::ACCEL_BINS);
        Action::new(-STEER_LIMIT + i as f64 * Self::steer_step(), ACCEL_MIN + j as f64 * Self::accel_step())
    }

    /// Nearest bin; out-of-box actions snap to the border bins.
    pub fn quantize(a: &Action) -> usize {
        let i = ((a.steer + STEER_LIMIT) / Self::steer_step()).round().clamp(0.0, (Self::STEER_BINS - 1) as f64);
        let j = ((a.accel - ACCEL_MIN) / Self::accel_step()).round().clamp(0.0, (Self::ACCEL_BINS - 1) as f64);
        i as usize * Self::ACCEL_BINS + j as usize
    }

    /// Normalized bin-occupancy histogram.
    pub fn histogram<'a>(actions: impl IntoIterator<Item = &'a Action>) -> Vec<f64> {
        let mut h = vec![0.0; Self::SIZE];
        let mut n = 0usize;
        for a in actions {
            h[Self::quantize(a)] += 1.0;
            n += 1;
        }
        if n > 0 {
            h.iter_mut().for_each(|v| *v /= n as f64);
        }
        h
    }

    pub fn histogram_l1(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    }
}

/// Softmax policy over the discrete action table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePolicy {
    pub net: Mlp,
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row /= z;
    }
    p
}

impl DiscretePolicy {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(DiscreteActionTable::SIZE);
        Self { net: Mlp::new(&sizes, 1e-3, rng) }
    }

    pub fn probabilities(&self, obs: &Observation) -> Array1<f64> {
        softmax_rows(&self.net.predict(observation_batch([obs]))).row(0).to_owned()
    }

    pub fn mode_action(&self, obs: &Observation) -> Action {
        let logits = self.net.predict(observation_batch([obs]));
        let best = logits
            .row(0)
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
            .0;
        DiscreteActionTable::action(best)
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &Observation, rng: &mut R) -> Action {
        let p = self.probabilities(obs);
        let r: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &pi) in p.iter().enumerate() {
            acc += pi;
            if r < acc {
                return DiscreteActionTable::action(i);
            }
        }
        DiscreteActionTable::action(DiscreteActionTable::SIZE - 1)
    }
}

/// Two online critics over `observation ⊕ normalized action` plus target copies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticPair {
    pub q1: Mlp,
    pub q2: Mlp,
    pub target1: Mlp,
    pub target2: Mlp,
}

impl CriticPair {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![obs_dim + ACTION_DIM];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let q1 = Mlp::new(&sizes, 1.0, rng);
        let q2 = Mlp::new(&sizes, 1.0, rng);
        Self { target1: q1.clone(), target2: q2.clone(), q1, q2 }
    }

    pub fn eval(&self, obs: &Observation, action: &Action) -> (f64, f64) {
        let x = critic_input(&observation_batch([obs]), &unit_batch([action]));
        (self.q1.predict(x.clone())[[0, 0]], self.q2.predict(x)[[0, 0]])
    }

    pub fn eval_target(&self, obs: &Observation, action: &Action) -> (f64, f64) {
        let x = critic_input(&observation_batch([obs]), &unit_batch([action]));
        (self.target1.predict(x.clone())[[0, 0]], self.target2.predict(x)[[0, 0]])
    }

    /// Polyak update of both targets.
    pub fn sync(&mut self, tau: f64) {
        self.target1.polyak_from(&self.q1, tau);
        self.target2.polyak_from(&self.q2, tau);
    }
}

pub fn critic_input(obs: &Array2<f64>, y: &Array2<f64>) -> Array2<f64> {
    concat_columns(obs, y)
}

/// Normalized actions, one row each.
pub fn unit_batch<'a>(actions: impl IntoIterator<Item = &'a Action>) -> Array2<f64> {
    let rows: Vec<f64> = actions.into_iter().flat_map(to_unit).collect();
    let n = rows.len() / ACTION_DIM;
    Array2::from_shape_vec((n, ACTION_DIM), rows).unwrap()
}
