//! Counter-based random streams.
//!
//! Every draw in a simulation is addressed by `(seed, domain, particle, step)`.
//! The address is hashed into a SplitMix64 key, so the numbers a particle sees
//! at a given step do not depend on how particles are scheduled across
//! workers, or on how many other particles exist.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

/// Independent stream families. Two runs that share a seed and a domain see
/// the same numbers.
pub mod domain {
    pub const INIT_X: u64 = 0x01;
    pub const NOISE_X: u64 = 0x02;
    pub const INIT_Y: u64 = 0x03;
    pub const NOISE_Y: u64 = 0x04;
    pub const SUBSAMPLE: u64 = 0x05;
    pub const BOOTSTRAP: u64 = 0x06;
    pub const PROJECTIONS: u64 = 0x07;
    pub const STRUCTURE: u64 = 0x08;
    pub const MOLLIFIER: u64 = 0x09;
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// SplitMix64 generator positioned at a hashed stream address.
#[derive(Debug, Clone)]
pub struct StreamRng {
    state: u64,
}

impl StreamRng {
    pub fn new(seed: u64, domain: u64, particle: u64, step: u64) -> Self {
        let mut key = mix(seed ^ GOLDEN);
        key = mix(key ^ domain.wrapping_mul(GOLDEN));
        key = mix(key ^ particle.wrapping_add(1).wrapping_mul(0xd6e8_feb8_6659_fd93));
        key = mix(key ^ step.wrapping_add(1).wrapping_mul(0xa076_1d64_78bd_642f));
        Self { state: key }
    }

    /// Uniform in [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }

    pub fn fill_normal(&mut self, out: &mut [f64], scale: f64) {
        for v in out.iter_mut() {
            *v = scale * self.normal();
        }
    }

    /// Uniform index in `0..n`.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }
}

impl RngCore for StreamRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
