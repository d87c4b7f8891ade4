use super::LearnError;
use crate::dynamics::Action;
use crate::envsim::{DoneReason, Observation, Transition, OBS_DIM};
use rand::Rng;
use std::collections::VecDeque;
use std::io::{Read, Write};

const REPLAY_MAGIC: &[u8; 8] = b"BCSACRB1";

/// Bounded FIFO of transitions with insert and sample accounting.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
    warmup: usize,
    inserted: u64,
    sampled: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, warmup: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { items: VecDeque::with_capacity(capacity.min(1 << 16)), capacity, warmup, inserted: 0, sampled: 0 }
    }

    pub fn insert(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn warmup(&self) -> usize {
        self.warmup
    }

    pub fn is_warm(&self) -> bool {
        self.items.len() >= self.warmup.max(1)
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn sampled(&self) -> u64 {
        self.sampled
    }

    /// Items sampled per item inserted.
    pub fn sample_to_insert_ratio(&self) -> f64 {
        if self.inserted == 0 {
            0.0
        } else {
            self.sampled as f64 / self.inserted as f64
        }
    }

    /// Uniform sampling with replacement.
    pub fn sample<R: Rng + ?Sized>(&mut self, batch: usize, rng: &mut R) -> Result<Vec<&Transition>, LearnError> {
        if !self.is_warm() {
            return Err(LearnError::Warmup { have: self.items.len(), need: self.warmup.max(1) });
        }
        self.sampled += batch as u64;
        let n = self.items.len();
        Ok((0..batch).map(|_| &self.items[rng.random_range(0..n)]).collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Restores contents and counters, e.g. when resuming.
    pub fn restore(&mut self, items: Vec<Transition>, inserted: u64, sampled: u64) {
        self.items = items.into_iter().collect();
        while self.items.len() > self.capacity {
            self.items.pop_front();
        }
        self.inserted = inserted;
        self.sampled = sampled;
    }
}

/// Binary dump of a replay buffer (little-endian), used for resumable runs.
pub fn write_replay<W: Write>(mut w: W, replay: &ReplayBuffer) -> Result<(), LearnError> {
    w.write_all(REPLAY_MAGIC)?;
    for v in [replay.capacity as u64, replay.warmup as u64, replay.inserted, replay.sampled, replay.len() as u64, OBS_DIM as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    for t in replay.iter() {
        for o in [&t.obs, &t.next_obs] {
            for x in o.as_slice() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        for v in [t.action.steer, t.action.accel, t.reward] {
            w.write_all(&v.to_le_bytes())?;
        }
        let reason = match t.reason {
            None => 0u8,
            Some(DoneReason::Horizon) => 1,
            Some(DoneReason::Collision) => 2,
            Some(DoneReason::Offroad) => 3,
        };
        w.write_all(&[t.done as u8, reason])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_replay<R: Read>(mut r: R) -> Result<ReplayBuffer, LearnError> {
    let bad = |m: &str| LearnError::Replay(m.to_string());
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != REPLAY_MAGIC {
        return Err(bad("bad magic"));
    }
    let mut u64s = [0u64; 6];
    for v in &mut u64s {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        *v = u64::from_le_bytes(b);
    }
    let [capacity, warmup, inserted, sampled, len, dim] = u64s;
    if dim as usize != OBS_DIM {
        return Err(bad(&format!("observation size {dim}, expected {OBS_DIM}")));
    }
    if capacity == 0 || len > capacity {
        return Err(bad("inconsistent sizes"));
    }
    let read_obs = |r: &mut R| -> Result<Observation, LearnError> {
        let mut buf = vec![0u8; 4 * OBS_DIM];
        r.read_exact(&mut buf)?;
        Ok(Observation::from_vec(buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()))
    };
    let mut items = Vec::with_capacity(len as usize);
    for _ in 0..len {
        let obs = read_obs(&mut r)?;
        let next_obs = read_obs(&mut r)?;
        let mut f = [0.0f64; 3];
        for v in &mut f {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *v = f64::from_le_bytes(b);
        }
        let mut flags = [0u8; 2];
        r.read_exact(&mut flags)?;
        let reason = match flags[1] {
            0 => None,
            1 => Some(DoneReason::Horizon),
            2 => Some(DoneReason::Collision),
            3 => Some(DoneReason::Offroad),
            _ => return Err(bad("bad done reason")),
        };
        items.push(Transition { obs, action: Action::new(f[0], f[1]), reward: f[2], next_obs, done: flags[0] != 0, reason });
    }
    let mut buf = ReplayBuffer::new(capacity as usize, warmup as usize);
    buf.restore(items, inserted, sampled);
    Ok(buf)
}
