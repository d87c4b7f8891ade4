//! Exact (de)serialization of ChaCha generator state.

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
struct RngState {
    seed: [u8; 32],
    stream: u64,
    word_pos: String,
}

pub fn serialize<S: Serializer>(rng: &ChaCha8Rng, s: S) -> Result<S::Ok, S::Error> {
    RngState { seed: rng.get_seed(), stream: rng.get_stream(), word_pos: rng.get_word_pos().to_string() }.serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ChaCha8Rng, D::Error> {
    let st = RngState::deserialize(d)?;
    let mut rng = ChaCha8Rng::from_seed(st.seed);
    rng.set_stream(st.stream);
    rng.set_word_pos(st.word_pos.parse().map_err(serde::de::Error::custom)?);
    Ok(rng)
}
