//! Named, indexable random streams derived from one seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a, fixed so stream derivation never depends on std's hasher.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Independent stream `index` of stage `stage` under `seed`.
pub fn substream(seed: u64, stage: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(stage));
    rng.set_stream(index);
    rng
}
