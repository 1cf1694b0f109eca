//! Random streams.
//!
//! Every run draws from ChaCha8 seeded by `seed` and positioned on stream
//! `replica`, so replicas never overlap and any replica can be regenerated
//! on its own.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, replica: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Uniform draw on the open interval `(0, 1)`.
pub fn open_unit(rng: &mut Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Exponential draw with the given positive rate.
pub fn exponential(rng: &mut Rng, rate: f64) -> f64 {
    -open_unit(rng).ln() / rate
}

/// Runs `f` once per replica in parallel; results come back in replica order.
pub fn replicas<T, F>(seed: u64, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut Rng) -> T + Sync,
{
    (0..count as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r);
            f(r, &mut rng)
        })
        .collect()
}
