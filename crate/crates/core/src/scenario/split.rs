use super::{Scenario, ScenarioError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

/// Difficulty buckets: the top fraction of scenarios by difficulty score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    All,
    Top50,
    Top10,
    Top1,
}

impl Bucket {
    pub const ALL: [Bucket; 4] = [Bucket::All, Bucket::Top50, Bucket::Top10, Bucket::Top1];

    pub fn percentile(self) -> f64 {
        match self {
            Bucket::All => 1.0,
            Bucket::Top50 => 0.5,
            Bucket::Top10 => 0.1,
            Bucket::Top1 => 0.01,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Bucket::All => "all",
            Bucket::Top50 => "top50",
            Bucket::Top10 => "top10",
            Bucket::Top1 => "top1",
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Bucket {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Bucket::ALL
            .into_iter()
            .find(|b| b.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown bucket `{s}` (expected all, top50, top10 or top1)"))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
    /// Difficulty scores, filled in once a difficulty model has been fitted.
    #[serde(default)]
    pub scores: BTreeMap<String, f64>,
}

impl DatasetSplit {
    pub fn bucket_train(&self, bucket: Bucket) -> Result<Vec<String>, ScenarioError> {
        self.bucket_of(&self.train, bucket)
    }

    pub fn bucket_test(&self, bucket: Bucket) -> Result<Vec<String>, ScenarioError> {
        self.bucket_of(&self.test, bucket)
    }

    fn bucket_of(&self, ids: &[String], bucket: Bucket) -> Result<Vec<String>, ScenarioError> {
        if bucket == Bucket::All {
            return Ok(ids.to_vec());
        }
        bucket_by_score(ids, &self.scores, bucket.percentile())
    }
}

/// Splits at the seed-family level so no family straddles train and test.
pub fn split_dataset(scenarios: &[Scenario], test_fraction: f64, seed: u64) -> Result<DatasetSplit, ScenarioError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(ScenarioError::Split(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let families: BTreeSet<u64> = scenarios.iter().map(|s| s.tags.family).collect();
    if families.len() < 2 {
        return Err(ScenarioError::Split(format!("need at least 2 seed families, found {}", families.len())));
    }
    let mut order: Vec<u64> = families.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((test_fraction * order.len() as f64).round() as usize).clamp(1, order.len() - 1);
    let test_families: BTreeSet<u64> = order[..n_test].iter().copied().collect();
    let (test, train): (Vec<_>, Vec<_>) = scenarios.iter().partition(|s| test_families.contains(&s.tags.family));
    Ok(DatasetSplit {
        train: train.into_iter().map(|s| s.id.clone()).collect(),
        test: test.into_iter().map(|s| s.id.clone()).collect(),
        scores: BTreeMap::new(),
    })
}

/// Highest-scored `ceil(percentile · n)` ids; ties at the cut go to the
/// lexicographically smaller id.
pub fn bucket_by_score(
    ids: &[String],
    scores: &BTreeMap<String, f64>,
    percentile: f64,
) -> Result<Vec<String>, ScenarioError> {
    if ids.is_empty() {
        return Err(ScenarioError::Split("no scenarios to bucket".into()));
    }
    if !(percentile > 0.0 && percentile <= 1.0) {
        return Err(ScenarioError::Split(format!("percentile {percentile} outside (0, 1]")));
    }
    let mut scored = ids
        .iter()
        .map(|id| {
            scores
                .get(id)
                .map(|&s| (s, id))
                .ok_or_else(|| ScenarioError::Split(format!("scenario {id} has no difficulty score")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    let k = ((percentile * ids.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(scored.into_iter().take(k).map(|(_, id)| id.clone()).collect())
}
