//! Deterministic hashing and the seeded PRNG every run draws from.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The PRNG used for trace generation and bypass sampling.
pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash of a program counter used to index the PC-based predictor tables.
pub fn pc_hash(pc: u64) -> u64 {
    mix64(pc ^ 0x5043_4841_5348)
}

/// Payload token standing in for the 64 bytes written by the `seq`-th write to `addr`.
pub fn payload_token(addr: u64, seq: u64) -> u64 {
    // Never zero: zero is the token of never-written memory.
    mix64(addr.rotate_left(32) ^ mix64(seq)) | 1
}

/// Independent PRNG streams derived from one run seed.
#[derive(Clone, Copy, Debug)]
pub enum Stream {
    Trace = 1,
    Bypass = 2,
}

pub fn rng_for(seed: u64, stream: Stream) -> SimRng {
    SimRng::seed_from_u64(mix64(seed) ^ mix64(stream as u64))
}
