//! Reproducible random streams.
//!
//! Every run takes one 64-bit master seed. Replica `r` draws from
//! `ChaCha8Rng::seed_from_u64(master)` switched to stream `r`, so any replica
//! can be regenerated on its own and concurrent replicas share no state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type SimRng = ChaCha8Rng;

pub fn replica_rng(master_seed: u64, replica: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replica);
    rng
}

/// Runs `f(replica, rng)` for every replica in parallel and returns the
/// results in replica order.
pub fn map_replicas<R, F>(master_seed: u64, replicas: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(u64, &mut SimRng) -> R + Sync,
{
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(master_seed, r);
            f(r, &mut rng)
        })
        .collect()
}
