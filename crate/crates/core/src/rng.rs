//! Seed derivation for reproducible, order-independent randomness.
//!
//! Every stochastic stage derives its generator from a named base seed and a
//! stream index, so regenerating scenario `i` never depends on how many
//! scenarios were drawn before it.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; decorrelates nearby (seed, index) pairs.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Mix a base seed with a stream index into an independent sub-seed.
pub fn mix(base_seed: u64, stream: u64) -> u64 {
    splitmix64(base_seed ^ splitmix64(stream))
}

/// Deterministic counter-based generator for a (base seed, stream) pair.
pub fn stream_rng(base_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut state = mix(base_seed, stream);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
