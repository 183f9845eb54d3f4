//! Sub-seed derivation. Every random stream in the crate is seeded from one
//! master seed plus a fixed label, so runs are reproducible and independent
//! streams never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the sub-seed for `label` from `master` (FNV-1a of the label mixed
/// through splitmix64).
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(master ^ splitmix64(h))
}

pub fn rng_for(master: u64, label: &str) -> Rng {
    let seed = derive_seed(master, label);
    log::debug!("sub-seed {label} = {seed:#018x} (master {master})");
    Rng::seed_from_u64(seed)
}
