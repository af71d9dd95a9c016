//! Deterministic derivation of named random substreams.
//!
//! Every stochastic stage (GA init, GA generation, PSO particle update,
//! Monte Carlo run, ...) pulls its randomness from a stream derived from
//! the root seed, a string label, and integer indices. Streams never
//! depend on worker count or evaluation order, so results reproduce
//! bit for bit across thread counts and platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a(state: &mut u64, bytes: &[u8]) {
    for &b in bytes {
        *state ^= b as u64;
        *state = state.wrapping_mul(FNV_PRIME);
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Collapses (root, label, indices) into a single well-mixed seed.
pub fn stream_seed(root: u64, label: &str, indices: &[u64]) -> u64 {
    let mut h = FNV_OFFSET;
    fnv1a(&mut h, &root.to_le_bytes());
    fnv1a(&mut h, label.as_bytes());
    for &i in indices {
        // separator byte keeps ("x", [1, 2]) distinct from ("x1", [2])
        fnv1a(&mut h, &[0xff]);
        fnv1a(&mut h, &i.to_le_bytes());
    }
    splitmix(h)
}

/// Returns the generator for the named substream.
pub fn stream(root: u64, label: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(root, label, indices))
}
