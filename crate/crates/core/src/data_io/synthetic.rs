use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::types::{Query, VectorRecord};

/// Deterministic uniform `[0, 1)` vectors; the same `(n, d, seed)` always
/// yields the same bytes.
pub fn generate_synthetic(n: usize, d: usize, seed: u64) -> Vec<VectorRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let values = (0..d).map(|_| rng.gen::<f32>()).collect();
            VectorRecord::new(i as u32, values)
        })
        .collect()
}

/// Queries drawn from the same generator, numbered from 0.
pub fn generate_synthetic_queries(n: usize, d: usize, seed: u64) -> Vec<Query> {
    generate_synthetic(n, d, seed)
        .into_iter()
        .map(|r| Query::new(r.id.0, r.values))
        .collect()
}
