//! Seed derivation and the deterministic generator used everywhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type DetRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for a named stream, e.g. a dungeon id under a world seed.
pub fn child_seed(seed: u64, stream: u64, key: u64) -> u64 {
    splitmix(splitmix(seed ^ splitmix(stream)) ^ key.wrapping_mul(0xA24B_AED4_963E_E407))
}

pub fn rng_for(seed: u64, stream: u64, key: u64) -> DetRng {
    DetRng::seed_from_u64(child_seed(seed, stream, key))
}

pub const STREAM_DUNGEON: u64 = 1;
pub const STREAM_CONNECTOR: u64 = 2;
pub const STREAM_COLUMNS: u64 = 3;
pub const STREAM_TORCHES: u64 = 4;
pub const STREAM_SIM: u64 = 5;
pub const STREAM_BAKE: u64 = 6;
