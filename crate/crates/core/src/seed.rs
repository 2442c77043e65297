//! Seed derivation for per-network random streams.
//!
//! Every stochastic operation takes one 64-bit seed. A network's stream is
//! `base ^ fnv1a(net_id)`, further mixed with a purpose tag and an index, so
//! results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// FNV-1a, 64-bit. Stable across platforms and compiler versions.
#[derive(Debug, Clone)]
pub struct Fnv64(u64);

impl Fnv64 {
    pub fn new() -> Self {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }

    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn write_u64(&mut self, v: u64) {
        self.write(&v.to_le_bytes());
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv64 {
    fn default() -> Self {
        Self::new()
    }
}

pub fn hash_str(s: &str) -> u64 {
    let mut h = Fnv64::new();
    h.write(s.as_bytes());
    h.finish()
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Purpose tags keep streams for different jobs on the same network apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    FitUnconditional = 1,
    FitConditional = 2,
    PathSampling = 3,
    Information = 4,
    ResidualOuter = 5,
    ResidualInner = 6,
    ScoreTest = 7,
    Simulate = 8,
    Boundary = 9,
    General = 10,
}

/// `seed ^ hash(net_id)`.
pub fn network_seed(seed: u64, net_id: &str) -> u64 {
    seed ^ hash_str(net_id)
}

pub fn stream_seed(seed: u64, net_id: &str, purpose: Purpose, index: u64) -> u64 {
    let base = network_seed(seed, net_id);
    splitmix(splitmix(base ^ splitmix(purpose as u64)) ^ index)
}

pub fn stream(seed: u64, net_id: &str, purpose: Purpose, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(stream_seed(seed, net_id, purpose, index))
}

pub fn rng(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}
