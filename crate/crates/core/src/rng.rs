//! Deterministic seed derivation for replicated experiments.
//!
//! Replication `r` of a run with master seed `s` draws from
//! `ChaCha8Rng::seed_from_u64(mix(s, r))`, with one ChaCha stream per noise
//! source so that disturbances, measurement noise and the endpoint chain never
//! share random numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::ReliabilityChain;

/// Independent random sources inside one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Disturbance = 1,
    Measurement = 2,
    Chain = 3,
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-replication seed: `splitmix64(master ^ splitmix64(rep))`.
pub fn mix_seed(master: u64, replication: u64) -> u64 {
    splitmix64(master ^ splitmix64(replication))
}

pub fn replication_rng(master: u64, replication: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(master, replication));
    rng.set_stream(stream as u64);
    rng
}

/// Samples `tau_0 .. tau_{len-1}` of the endpoint chain.
pub fn sample_tau_path<R: Rng>(chain: &ReliabilityChain, len: usize, rng: &mut R) -> Vec<bool> {
    let mut path = Vec::with_capacity(len);
    let mut on_prob = chain.tau0.on_probability();
    for _ in 0..len {
        let on = rng.random::<f64>() < on_prob;
        path.push(on);
        on_prob = chain.next_on_probability(on);
    }
    path
}
