//! Deterministic seed derivation. Every random stream in the crate is keyed
//! by a master seed plus a namespace and an index, so adding replications or
//! subsystems never perturbs existing streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a, used only to turn a namespace label into a word.
fn label_hash(label: &str) -> u64 {
    label
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn derive_seed(master: u64, namespace: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ label_hash(namespace)).wrapping_add(splitmix64(index)))
}

pub fn rng(master: u64, namespace: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, namespace, index))
}
