//! Seed derivation. Every randomized path in the crate owns its RNG and
//! derives it from caller-supplied seeds plus stable string context, so
//! results are reproducible across runs, platforms, and thread schedules.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the seed bytes and any number of context strings.
/// Stable by construction, unlike `DefaultHasher`.
pub fn mix(seed: u64, context: &[&str]) -> u64 {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut h = OFFSET;
    for byte in seed.to_le_bytes() {
        h = (h ^ byte as u64).wrapping_mul(PRIME);
    }
    for part in context {
        for byte in part.as_bytes() {
            h = (h ^ *byte as u64).wrapping_mul(PRIME);
        }
        // Separator guards against ("ab","c") colliding with ("a","bc").
        h = (h ^ 0xff).wrapping_mul(PRIME);
    }
    h
}

pub fn rng_for(seed: u64, context: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, context))
}
