//! Seed derivation. Every random stream in a run is keyed off one root seed
//! plus a label and counters, so runs are reproducible end to end.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a root seed with a label and a list of counters into a sub-seed.
pub fn derive(seed: u64, label: &str, counters: &[u64]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    let mut z = splitmix64(seed ^ h);
    for &c in counters {
        z = splitmix64(z ^ splitmix64(c));
    }
    z
}

/// Generator for one labeled stream.
pub fn rng(seed: u64, label: &str, counters: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, label, counters))
}

/// Stateless hash of `(seed, ordinal)`; used for streaming row assignment.
pub fn hash_ordinal(seed: u64, ordinal: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ ordinal.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}
