use super::{CriticPair, DiscretePolicy, GaussianPolicy};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u64, expected: u32 },
}

/// All networks of one trained policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NetworkBundle {
    Continuous { actor: GaussianPolicy, critics: CriticPair },
    Discrete { policy: DiscretePolicy },
}

impl NetworkBundle {
    pub fn is_finite(&self) -> bool {
        match self {
            NetworkBundle::Continuous { actor, critics } => {
                actor.net.is_finite()
                    && [&critics.q1, &critics.q2, &critics.target1, &critics.target2].iter().all(|m| m.is_finite())
            }
            NetworkBundle::Discrete { policy } => policy.net.is_finite(),
        }
    }
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    version: u32,
    payload: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn {
    version: u64,
    payload: serde_json::Value,
}

pub fn to_versioned_json<T: Serialize>(value: &T) -> Result<String, CheckpointError> {
    Ok(serde_json::to_string(&EnvelopeOut { version: CHECKPOINT_VERSION, payload: value })?)
}

pub fn from_versioned_json<T: DeserializeOwned>(text: &str) -> Result<T, CheckpointError> {
    let env: EnvelopeIn = serde_json::from_str(text)?;
    if env.version != CHECKPOINT_VERSION as u64 {
        return Err(CheckpointError::Version { found: env.version, expected: CHECKPOINT_VERSION });
    }
    Ok(serde_json::from_value(env.payload)?)
}

/// Writes through a temporary file and renames, so readers never see a
/// partial checkpoint.
pub fn save_checkpoint<T: Serialize>(path: &Path, value: &T) -> Result<(), CheckpointError> {
    let text = to_versioned_json(value)?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn load_checkpoint<T: DeserializeOwned>(path: &Path) -> Result<T, CheckpointError> {
    from_versioned_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bundle_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bundle = NetworkBundle::Continuous {
            actor: GaussianPolicy::new(6, &[5, 4], &mut rng),
            critics: CriticPair::new(6, &[5, 4], &mut rng),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        save_checkpoint(&path, &bundle).unwrap();
        let back: NetworkBundle = load_checkpoint(&path).unwrap();
        assert_eq!(back, bundle);
        let discrete = NetworkBundle::Discrete { policy: DiscretePolicy::new(6, &[4], &mut rng) };
        assert_eq!(from_versioned_json::<NetworkBundle>(&to_versioned_json(&discrete).unwrap()).unwrap(), discrete);
    }

    #[test]
    fn wrong_version_rejected() {
        let err = from_versioned_json::<NetworkBundle>(r#"{"version":7,"payload":{}}"#).unwrap_err();
        assert!(matches!(err, CheckpointError::Version { found: 7, .. }));
    }
}
