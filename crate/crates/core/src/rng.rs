//! Seeded randomness.
//!
//! Every stochastic component draws from its own [`SimRng`], seeded from the
//! global run seed and a component name, so adding draws in one component never
//! perturbs another.

use rand::SeedableRng;

pub type SimRng = rand_chacha::ChaCha8Rng;

/// Identifier of [`SimRng`], recorded in trace files and configs.
pub const RNG_ALGORITHM: &str = "chacha8";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// One round of the splitmix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-component seed: `splitmix64(global ^ fnv1a(component))`.
pub fn derive_seed(global: u64, component: &str) -> u64 {
    splitmix64(global ^ fnv1a(component.as_bytes()))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

pub fn component_rng(global: u64, component: &str) -> SimRng {
    rng_from_seed(derive_seed(global, component))
}
