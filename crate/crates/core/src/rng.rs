//! Counter-addressed random streams.
//!
//! A stream is identified by `(seed, task, replicate)`. The ChaCha key is
//! derived from `(seed, task)` and the replicate selects the ChaCha stream, so a
//! replicate's randomness does not depend on which worker runs it or when.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub task: u64,
    pub replicate: u64,
}

impl RngStream {
    pub fn new(seed: u64, task: u64, replicate: u64) -> Self {
        RngStream { seed, task, replicate }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.task.to_le_bytes());
        key[16..24].copy_from_slice(b"potmax\0\0");
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.replicate);
        rng
    }
}

/// Stable task id for a label, so experiments sharing a seed get distinct streams.
pub fn task_id(label: &str) -> u64 {
    let h = Sha256::digest(label.as_bytes());
    u64::from_le_bytes(h[..8].try_into().expect("digest has 32 bytes"))
}

/// Streams for replicates `0..n` of one task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStreams {
    pub seed: u64,
    pub task: u64,
}

impl TaskStreams {
    pub fn new(seed: u64, label: &str) -> Self {
        TaskStreams {
            seed,
            task: task_id(label),
        }
    }

    pub fn sub(&self, label: &str) -> Self {
        TaskStreams {
            seed: self.seed,
            task: self.task ^ task_id(label).rotate_left(17),
        }
    }

    pub fn stream(&self, replicate: u64) -> RngStream {
        RngStream::new(self.seed, self.task, replicate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4)
            .map(|_| 0)
            .scan(RngStream::new(1, 2, 3).rng(), |r, _| Some(r.random()))
            .collect();
        let b: Vec<u64> = (0..4)
            .map(|_| 0)
            .scan(RngStream::new(1, 2, 3).rng(), |r, _| Some(r.random()))
            .collect();
        assert_eq!(a, b);
        let c: u64 = RngStream::new(1, 2, 4).rng().random();
        let d: u64 = RngStream::new(1, 3, 3).rng().random();
        assert_ne!(a[0], c);
        assert_ne!(a[0], d);
        assert_ne!(task_id("a"), task_id("b"));
    }
}
