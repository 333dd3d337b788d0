//! Test oracles that share no code path with the engine: a cyclic Jacobi
//! eigensolver, Gaussian elimination for normal equations, and a tensor
//! factor-model panel generator with known potential outcomes.

pub mod factor;
pub mod oracle;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
