//! Shared fixtures for the criterion benches.

use fogctl_core::sampling::{random_model, ModelShape};
use fogctl_core::{LinearSystemModel, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Reproducible random plant with a unit-norm-ish start state.
pub fn fixture(shape: ModelShape, seed: u64) -> (LinearSystemModel, Vector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = random_model(&mut rng, shape).expect("sampled model is valid");
    let x0 = Vector::from_element(model.state_dim(), 1.0 / (model.state_dim() as f64).sqrt());
    (model, x0)
}
