//! Scenario difficulty: resimulation labels, a logistic model over scenario
//! summary features, and AUROC evaluation.

use crate::envsim::{rollout, EnvError, Policy, PreparedScenario, RewardConfig};
use crate::scenario::{AgentKind, Scenario};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read, Write};
use std::sync::Arc;
use thiserror::Error;

/// Separation below which a probe rollout counts as a near miss, meters.
pub const NEAR_MISS: f64 = 0.5;
pub const NUM_FEATURES: usize = 8;
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "min_agent_gap",
    "min_edge_clearance",
    "agent_count",
    "mean_speed",
    "max_speed",
    "intersection",
    "oncoming",
    "peak_decel",
];
const MAX_ITERS: usize = 10_000;
const LOSS_TOL: f64 = 1e-8;
const LEARNING_RATE: f64 = 0.5;
const LOGIT_CLAMP: f64 = 35.0;

#[derive(Debug, Error)]
pub enum DifficultyError {
    #[error("labels need both classes (got {positives} positive of {total})")]
    SingleClass { positives: usize, total: usize },
    #[error("{features} feature rows for {labels} labels")]
    Mismatch { features: usize, labels: usize },
    #[error("rollout: {0}")]
    Rollout(#[from] EnvError),
    #[error("scores file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyLabel {
    pub scenario_id: String,
    pub positive: bool,
    pub collision: bool,
    /// Smallest agent separation seen by the probe, meters.
    pub min_separation: f64,
}

/// Rolls the probe deterministically and labels the scenario.
pub fn resimulate_label(prep: &Arc<PreparedScenario>, probe: &mut dyn Policy) -> Result<DifficultyLabel, DifficultyError> {
    let (_, result) = rollout(probe, prep, &RewardConfig::default(), false)?;
    Ok(label_from(&prep.scenario.id, result.collision, result.min_separation))
}

pub fn label_from(id: &str, collision: bool, min_separation: f64) -> DifficultyLabel {
    DifficultyLabel {
        scenario_id: id.to_string(),
        positive: collision || min_separation < NEAR_MISS,
        collision,
        min_separation: if collision { 0.0 } else { min_separation },
    }
}

/// Summary features of the expert log (see `FEATURE_NAMES`).
pub fn scenario_features(s: &Scenario) -> [f64; NUM_FEATURES] {
    let clearance = s.expert_clearance();
    let speeds: Vec<f64> = s.ego_track.iter().map(|e| e.speed).collect();
    let mean_speed = speeds.iter().sum::<f64>() / speeds.len() as f64;
    let max_speed = speeds.iter().copied().fold(0.0, f64::max);
    let peak_decel = speeds.windows(2).map(|w| (w[0] - w[1]) / s.dt).fold(0.0, f64::max);
    let ego_heading = s.ego_track[0].heading;
    let (mut crossing, mut oncoming) = (false, false);
    for a in &s.agents {
        let Some(b) = a.boxes.iter().flatten().next() else { continue };
        let rel = crate::dynamics::normalize_angle(b.heading - ego_heading).abs();
        let moving = a.boxes.iter().flatten().zip(a.boxes.iter().flatten().skip(1)).any(|(p, q)| (p.cx - q.cx).hypot(p.cy - q.cy) > 1e-3);
        if !moving {
            continue;
        }
        match a.kind {
            AgentKind::Vehicle if rel > 2.4 => oncoming = true,
            _ if rel > 0.8 && rel < 2.4 => crossing = true,
            _ => {}
        }
    }
    let gap = if clearance.min_agent_gap.is_finite() { clearance.min_agent_gap.min(20.0) } else { 20.0 };
    [
        gap,
        -clearance.max_edge_distance,
        s.agents.len() as f64,
        mean_speed,
        max_speed,
        crossing as u8 as f64,
        oncoming as u8 as f64,
        peak_decel,
    ]
}

/// Logistic regression on standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyModel {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl DifficultyModel {
    /// Untrained model: zero weights and bias.
    pub fn zero(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], scale: vec![1.0; dim], weights: vec![0.0; dim], bias: 0.0, iterations: 0 }
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.bias
            + x.iter().zip(&self.mean).zip(&self.scale).zip(&self.weights).map(|(((v, m), s), w)| w * (v - m) / s).sum::<f64>()
    }

    /// Strictly inside (0, 1): the logit is clamped before the sigmoid.
    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x).clamp(-LOGIT_CLAMP, LOGIT_CLAMP))
    }

    pub fn score(&self, s: &Scenario) -> f64 {
        self.probability(&scenario_features(s))
    }

    /// Mean cross-entropy on standardized inputs.
    fn loss(&self, z: &[Vec<f64>], y: &[f64]) -> f64 {
        z.iter()
            .zip(y)
            .map(|(x, &t)| {
                let l = self.bias + x.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>();
                log1p_exp(l) - t * l
            })
            .sum::<f64>()
            / y.len() as f64
    }
}

/// Full-batch gradient descent on the mean cross-entropy until the loss
/// changes by less than 1e-8 or 10k iterations.
pub fn fit_difficulty_model(features: &[Vec<f64>], labels: &[bool]) -> Result<DifficultyModel, DifficultyError> {
    if features.len() != labels.len() {
        return Err(DifficultyError::Mismatch { features: features.len(), labels: labels.len() });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(DifficultyError::SingleClass { positives, total: labels.len() });
    }
    let n = features.len() as f64;
    let dim = features[0].len();
    let mean: Vec<f64> = (0..dim).map(|j| features.iter().map(|x| x[j]).sum::<f64>() / n).collect();
    let scale: Vec<f64> = (0..dim)
        .map(|j| {
            let var = features.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / n;
            if var > 1e-12 { var.sqrt() } else { 1.0 }
        })
        .collect();
    let z: Vec<Vec<f64>> = features.iter().map(|x| (0..dim).map(|j| (x[j] - mean[j]) / scale[j]).collect()).collect();
    let y: Vec<f64> = labels.iter().map(|&l| l as u8 as f64).collect();
    let mut model = DifficultyModel { mean, scale, weights: vec![0.0; dim], bias: 0.0, iterations: 0 };
    let mut prev = model.loss(&z, &y);
    for it in 1..=MAX_ITERS {
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        for (x, &t) in z.iter().zip(&y) {
            let p = sigmoid(model.bias + x.iter().zip(&model.weights).map(|(a, w)| a * w).sum::<f64>());
            let e = p - t;
            gb += e;
            gw.iter_mut().zip(x).for_each(|(g, a)| *g += e * a);
        }
        model.bias -= LEARNING_RATE * gb / n;
        model.weights.iter_mut().zip(&gw).for_each(|(w, g)| *w -= LEARNING_RATE * g / n);
        model.iterations = it;
        let loss = model.loss(&z, &y);
        if (prev - loss).abs() < LOSS_TOL {
            break;
        }
        prev = loss;
    }
    Ok(model)
}

/// Area under the ROC curve; tied scores count one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for p in &pos {
        for q in &neg {
            wins += if p > q { 1.0 } else if p == q { 0.5 } else { 0.0 };
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

/// One line of the scores file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRecord {
    pub scenario_id: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<bool>,
}

pub fn write_scores<W: Write>(mut w: W, records: &[ScoreRecord]) -> Result<(), DifficultyError> {
    for r in records {
        writeln!(w, "{}", serde_json::to_string(r).expect("plain record"))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores<R: Read>(r: R) -> Result<Vec<ScoreRecord>, DifficultyError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DifficultyError::Format { line: i + 1, message: e.to_string() })?);
    }
    Ok(out)
}
