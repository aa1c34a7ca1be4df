//! Seed derivation for reproducible, worker-count-independent randomness.

use hetrec_ps::splitmix64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Folds `parts` into one 64-bit seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut state = 0x6a09_e667_f3bc_c908u64;
    for p in parts {
        state ^= *p;
        splitmix64(&mut state);
        state = splitmix64(&mut state);
    }
    state
}

pub fn rng_for(parts: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(parts))
}
