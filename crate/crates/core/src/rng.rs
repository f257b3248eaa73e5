//! Seeded generators with stable stream derivation.
//!
//! Every random draw in the system comes from a ChaCha generator derived
//! from the run seed plus a structural label, so results do not depend on
//! scheduling or call order across actors.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// FNV-1a over bytes; stable across platforms and releases.
fn fnv1a(init: u64, bytes: &[u8]) -> u64 {
    let mut h = init ^ 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives an independent generator from `seed` and a label path such as
/// `["shares", user, epoch, view]`.
pub fn derive(seed: u64, labels: &[&str]) -> ChaCha20Rng {
    let mut h = seed;
    for label in labels {
        h = fnv1a(h, label.as_bytes());
        h = fnv1a(h, b"/");
    }
    ChaCha20Rng::seed_from_u64(h)
}

/// Convenience for labels with a trailing integer component.
pub fn derive_n(seed: u64, labels: &[&str], n: i64) -> ChaCha20Rng {
    let mut owned: Vec<&str> = labels.to_vec();
    let tail = n.to_string();
    owned.push(&tail);
    derive(seed, &owned)
}
