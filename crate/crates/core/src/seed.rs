//! Stable seed derivation.
//!
//! Per-node generators are seeded from `(run seed, node id)` so that a node's
//! training can be replayed in isolation and does not depend on how many other
//! nodes exist or in which order they are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the little-endian run seed followed by the node id bytes.
pub fn node_seed(seed: u64, node: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(node.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_nodes_get_distinct_seeds() {
        assert_ne!(node_seed(7, "Food"), node_seed(7, "Energy"));
        assert_ne!(node_seed(7, "Food"), node_seed(8, "Food"));
        assert_eq!(node_seed(7, "Food"), node_seed(7, "Food"));
    }
}
