//! Seed derivation for reproducible random streams.
//!
//! Every consumer of randomness owns its own ChaCha stream whose seed is
//! derived from the master seed, a domain tag, and an entity id. Edges can
//! therefore be reordered or run in parallel without changing any result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags for the independent streams of one simulation.
pub mod domain {
    /// Central policy initialization, one stream per task.
    pub const CENTRAL_INIT: u64 = 1;
    /// Fresh local policy initialization (edges arriving without a central policy).
    pub const EDGE_INIT: u64 = 2;
    /// Initial environment state, one stream per edge.
    pub const ENV_RESET: u64 = 3;
    /// Environment dynamics, one stream per edge.
    pub const ENV_STEP: u64 = 4;
    /// Action selection, tie-breaking, and replay sampling, one stream per edge.
    pub const POLICY: u64 = 5;
    /// Per-round edge availability, one stream per simulation.
    pub const AVAILABILITY: u64 = 6;
    /// Reward-normalization calibration runs.
    pub const CALIBRATION: u64 = 7;
}

/// SplitMix64 finalizer; the mixing primitive behind [`derive_seed`].
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of stream `(domain, id)` from the master seed.
pub fn derive_seed(master: u64, domain: u64, id: u64) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ domain);
    splitmix64(h ^ id)
}

/// Builds the ChaCha stream for `(domain, id)`.
pub fn stream(master: u64, domain: u64, id: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, domain, id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_seeds_are_stable() {
        assert_eq!(derive_seed(7, 1, 0), derive_seed(7, 1, 0));
        assert_ne!(derive_seed(7, 1, 0), derive_seed(7, 1, 1));
        assert_ne!(derive_seed(7, 1, 0), derive_seed(7, 2, 0));
        assert_ne!(derive_seed(7, 1, 0), derive_seed(8, 1, 0));
    }

    #[test]
    fn streams_reproduce_bit_identical_sequences() {
        let a: Vec<u64> = (0..32).map(|_| 0).collect::<Vec<_>>();
        let mut s1 = stream(42, domain::ENV_STEP, 3);
        let mut s2 = stream(42, domain::ENV_STEP, 3);
        let v1: Vec<u64> = a.iter().map(|_| s1.random()).collect();
        let v2: Vec<u64> = a.iter().map(|_| s2.random()).collect();
        assert_eq!(v1, v2);
    }
}
