//! Deterministic random streams.
//!
//! All stochastic code in this crate draws from ChaCha8 streams keyed by
//! `(seed, stream, index)`. Streams are independent and counter-derived,
//! so any sample can be regenerated in isolation and generation order
//! never matters for reproducibility.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Well-known stream ids, so call sites don't collide by accident.
pub mod streams {
    pub const INIT: u64 = 0x01;
    pub const TERRAIN: u64 = 0x02;
    pub const POSE: u64 = 0x03;
    pub const SHUFFLE: u64 = 0x04;
    pub const TAU: u64 = 0x05;
    pub const NOISE: u64 = 0x06;
    pub const DIFFUSION_STEP: u64 = 0x07;
    pub const SAMPLER: u64 = 0x08;
    pub const GRAD_CHECK: u64 = 0x09;
    pub const SCENARIO: u64 = 0x0a;
    pub const TOY: u64 = 0x0b;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix `(seed, stream, index)` into a single key.
pub fn mix(seed: u64, stream: u64, index: u64) -> u64 {
    let mut state = seed;
    let a = splitmix64(&mut state);
    state ^= stream.wrapping_mul(0xd6e8_feb8_6659_fd93);
    let b = splitmix64(&mut state);
    state ^= index.wrapping_mul(0xa076_1d64_78bd_642f);
    let c = splitmix64(&mut state);
    a ^ b.rotate_left(17) ^ c.rotate_left(43)
}

/// A fresh ChaCha8 stream for `(seed, stream, index)`.
pub fn stream(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = mix(seed, stream, index);
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Uniform in `[0, 1)` with 53 bits of precision.
pub fn next_f64<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in `[lo, hi)`.
pub fn next_range<R: RngCore>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * next_f64(rng)
}

/// Uniform integer in `[0, n)` by rejection, unbiased.
pub fn next_index<R: RngCore>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0);
    let n = n as u64;
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return (v % n) as usize;
        }
    }
}

/// One standard normal draw via Box-Muller (second value discarded).
pub fn next_normal<R: RngCore>(rng: &mut R) -> f64 {
    #[allow(unused_imports)]
    use num_traits::Float; // ln/sqrt/cos without std
    // u1 in (0, 1] so the log is finite.
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = next_f64(rng);
    (-2.0 * u1.ln()).sqrt() * (core::f64::consts::TAU * u2).cos()
}

/// Fill a vector with standard normal draws.
pub fn normal_vec<R: RngCore>(rng: &mut R, n: usize) -> alloc::vec::Vec<f64> {
    (0..n).map(|_| next_normal(rng)).collect()
}

/// Fisher-Yates shuffle of `0..n`, deterministic in the rng.
pub fn shuffled_indices<R: RngCore>(rng: &mut R, n: usize) -> alloc::vec::Vec<usize> {
    let mut idx: alloc::vec::Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = next_index(rng, i + 1);
        idx.swap(i, j);
    }
    idx
}
