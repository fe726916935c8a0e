//! Deterministic random streams keyed by `(seed, phase, iteration, id)`.
//!
//! Each stream is an independent ChaCha8 stream, so results do not depend
//! on the order in which agents are processed or on the thread count.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Phase {
    Seeding = 1,
    Contact = 2,
    Transition = 3,
    Icu = 4,
    Tracing = 5,
    Lockdown = 6,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Streams {
    key: [u8; 32],
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut key);
        Self { key }
    }

    /// Stream for `id` in `phase` of iteration `t` (`t < 2^24`).
    pub fn stream(&self, phase: Phase, t: u32, id: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(((phase as u64) << 56) | ((u64::from(t) & 0xff_ffff) << 32) | u64::from(id));
        rng
    }
}
