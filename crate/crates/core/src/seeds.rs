//! Named random sub-streams derived from one root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(name: &str, id: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes().chain(id.to_le_bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Independent generator for the sub-stream `(name, id)` of `root`.
pub fn stream_rng(root: u64, name: &str, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(fnv1a(name, id));
    rng
}

/// A child seed for `(name, id)`, for components that take a plain `u64`.
pub fn derive_seed(root: u64, name: &str, id: u64) -> u64 {
    use rand::RngCore;
    stream_rng(root, name, id).next_u64()
}
