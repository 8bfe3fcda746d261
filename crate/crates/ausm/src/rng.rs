//! Deterministic random number generation.
//!
//! Two generators cover everything the crate needs:
//!
//! * [`param_value`] — a counter-based generator keyed by (seed, parameter
//!   path, element index). Each weight element is a pure function of its key,
//!   so adding a parameter to the model never perturbs any other parameter.
//! * [`StreamRng`] — a sequential splitmix64 stream for sampling decisions
//!   (ID draws, timestep sampling, scene generation). Its state is a single
//!   `u64`, which makes session checkpoints trivially bit-exact.

use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over a string, used to key parameter paths.
pub fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

#[inline]
fn unit_f32(bits: u64) -> f32 {
    // Top 24 bits -> [0, 1).
    ((bits >> 40) as f32) * (1.0 / (1u64 << 24) as f32)
}

/// Element `idx` of the parameter at `path`, uniform in [-bound, +bound).
pub fn param_value(seed: u64, path_hash: u64, idx: u64, bound: f32) -> f32 {
    let base = mix64(seed ^ mix64(path_hash.wrapping_add(GOLDEN)));
    let v = mix64(base ^ mix64(idx.wrapping_add(1).wrapping_mul(GOLDEN)));
    (2.0 * unit_f32(v) - 1.0) * bound
}

/// Sequential splitmix64 stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamRng {
    state: u64,
}

impl StreamRng {
    pub fn new(seed: u64) -> Self {
        StreamRng {
            state: mix64(seed ^ 0x5EED_5EED_5EED_5EED),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform in [0, n). n must be nonzero.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Uniform in [0, 1).
    pub fn unit_f32(&mut self) -> f32 {
        unit_f32(self.next_u64())
    }

    /// Uniform in [lo, hi).
    pub fn range_f32(&mut self, lo: f32, hi: f32) -> f32 {
        lo + self.unit_f32() * (hi - lo)
    }
}
