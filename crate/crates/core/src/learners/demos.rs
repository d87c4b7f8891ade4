use super::LearnError;
use crate::dynamics::{inverse_action, Action};
use crate::envsim::{featurize, Observation, PreparedScenario};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::sync::Arc;

pub const DEMO_FORMAT_VERSION: u32 = 1;

/// One expert (observation, action) pair recovered by inverse dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoSample {
    pub scenario_id: String,
    pub step: usize,
    pub obs: Observation,
    pub action: Action,
    pub residual: f64,
    pub infeasible: bool,
}

/// On-disk form of a demo sample; observations are re-derived on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoRecord {
    pub scenario_id: String,
    pub step: usize,
    pub steer: f64,
    pub accel: f64,
    pub residual: f64,
    pub infeasible: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemoHeader {
    demo_version: u32,
    count: usize,
}

#[derive(Debug, Clone, Default)]
pub struct DemoDataset {
    samples: Vec<DemoSample>,
    usable: Vec<usize>,
}

/// Inverse-dynamics labels for every step of the expert tracks.
pub fn demo_records(preps: &[Arc<PreparedScenario>]) -> Result<Vec<DemoRecord>, LearnError> {
    let mut out = Vec::new();
    for prep in preps {
        let s = &prep.scenario;
        let geometry = s.geometry();
        for (t, w) in s.ego_track.windows(2).enumerate() {
            let sol = inverse_action(&w[0], &w[1], &geometry, s.dt).map_err(|e| LearnError::Demo(e.to_string()))?;
            out.push(DemoRecord {
                scenario_id: s.id.clone(),
                step: t,
                steer: sol.action.steer,
                accel: sol.action.accel,
                residual: sol.residual,
                infeasible: sol.infeasible,
            });
        }
    }
    Ok(out)
}

impl DemoDataset {
    pub fn from_scenarios(preps: &[Arc<PreparedScenario>]) -> Result<Self, LearnError> {
        Self::from_records(preps, &demo_records(preps)?)
    }

    /// Pairs records with featurized expert states; records for scenarios not
    /// in `preps` are skipped.
    pub fn from_records(preps: &[Arc<PreparedScenario>], records: &[DemoRecord]) -> Result<Self, LearnError> {
        let by_id: HashMap<&str, &Arc<PreparedScenario>> = preps.iter().map(|p| (p.scenario.id.as_str(), p)).collect();
        let mut samples = Vec::new();
        for r in records {
            let Some(prep) = by_id.get(r.scenario_id.as_str()) else { continue };
            let track = &prep.scenario.ego_track;
            if r.step + 1 >= track.len() {
                return Err(LearnError::Demo(format!("{} step {} beyond horizon", r.scenario_id, r.step)));
            }
            samples.push(DemoSample {
                scenario_id: r.scenario_id.clone(),
                step: r.step,
                obs: featurize(prep, &track[r.step], r.step),
                action: Action::new(r.steer, r.accel),
                residual: r.residual,
                infeasible: r.infeasible,
            });
        }
        Ok(Self::from_samples(samples))
    }

    pub fn from_samples(samples: Vec<DemoSample>) -> Self {
        let usable = samples.iter().enumerate().filter(|(_, s)| !s.infeasible && s.action.in_bounds()).map(|(i, _)| i).collect();
        Self { samples, usable }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples available for training (feasible, in-box).
    pub fn usable_len(&self) -> usize {
        self.usable.len()
    }

    pub fn infeasible_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().filter(|s| s.infeasible).count() as f64 / self.samples.len() as f64
    }

    pub fn samples(&self) -> &[DemoSample] {
        &self.samples
    }

    /// Uniform sampling with replacement over usable pairs.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<&DemoSample>, LearnError> {
        if self.usable.is_empty() {
            return Err(LearnError::EmptyBatch);
        }
        Ok((0..batch).map(|_| &self.samples[self.usable[rng.random_range(0..self.usable.len())]]).collect())
    }
}

pub fn write_demos<W: Write>(mut w: W, records: &[DemoRecord]) -> Result<(), LearnError> {
    let header = DemoHeader { demo_version: DEMO_FORMAT_VERSION, count: records.len() };
    writeln!(w, "{}", serde_json::to_string(&header).map_err(|e| LearnError::Demo(e.to_string()))?)?;
    for r in records {
        writeln!(w, "{}", serde_json::to_string(r).map_err(|e| LearnError::Demo(e.to_string()))?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_demos<R: Read>(r: R) -> Result<Vec<DemoRecord>, LearnError> {
    let mut lines = BufReader::new(r).lines().enumerate();
    let header: DemoHeader = match lines.next() {
        Some((_, line)) => serde_json::from_str(&line?).map_err(|e| LearnError::Demo(format!("line 1: {e}")))?,
        None => return Err(LearnError::Demo("empty demo file".into())),
    };
    if header.demo_version != DEMO_FORMAT_VERSION {
        return Err(LearnError::Demo(format!(
            "unsupported demo version {} (expected {DEMO_FORMAT_VERSION})",
            header.demo_version
        )));
    }
    let mut out = Vec::with_capacity(header.count);
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| LearnError::Demo(format!("line {}: {e}", i + 1)))?);
    }
    if out.len() != header.count {
        return Err(LearnError::Demo(format!("header declares {} records, found {}", header.count, out.len())));
    }
    Ok(out)
}
