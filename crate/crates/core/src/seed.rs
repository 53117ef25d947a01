//! Seed derivation. Every random stream in a run descends from one master
//! seed so a manifest's seed reproduces the whole run.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type Rng = ChaCha12Rng;

/// Stream seed for a (channel, direction) pair: master ⊕ channel ⊕ direction.
pub fn channel_seed(master: u64, channel_id: usize, direction_index: u64) -> u64 {
    master ^ (channel_id as u64) ^ (direction_index << 32)
}

/// Mixes a tag into a seed (splitmix64 finaliser) for sub-streams that must
/// not collide with plain XOR-derived ones.
pub fn mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
