//! Random model generators for test campaigns and benchmarks.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::linalg::{Mat, Vector};
use crate::model::{LinearSystemModel, SystemSpec};

/// Shape of a random model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelShape {
    pub state_dim: usize,
    pub control_dim: usize,
    /// `Some(m)` adds a random `m × n` measurement matrix and noise.
    pub obs_dim: Option<usize>,
    pub horizon: usize,
    /// Matrices may change from stage to stage.
    pub time_varying: bool,
}

impl ModelShape {
    pub fn new(state_dim: usize, control_dim: usize, horizon: usize) -> Self {
        ModelShape {
            state_dim,
            control_dim,
            obs_dim: None,
            horizon,
            time_varying: false,
        }
    }

    pub fn with_measurement(mut self, obs_dim: usize) -> Self {
        self.obs_dim = Some(obs_dim);
        self
    }

    pub fn time_varying(mut self) -> Self {
        self.time_varying = true;
        self
    }
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Mat {
    Mat::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, scale: f64) -> Vector {
    Vector::from_fn(len, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

/// `FFᵀ` with `F` Gaussian: PSD, full rank almost surely.
pub fn random_psd<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> Mat {
    let f = gaussian_matrix(rng, n, n, scale.sqrt());
    &f * f.transpose()
}

/// A valid model with moderately conditioned matrices: spectral radius of
/// `A` near one, `R ⪰ 0.1 I`.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, shape: ModelShape) -> Result<LinearSystemModel> {
    let n = shape.state_dim;
    let s = shape.control_dim;
    let horizon = shape.horizon;
    let a_scale = 0.9 / (n as f64).sqrt();
    let base_a = gaussian_matrix(rng, n, n, a_scale);
    let base_b = gaussian_matrix(rng, n, s, 1.0);
    let base_q = random_psd(rng, n, 0.5);
    let base_r = random_psd(rng, s, 0.5) + Mat::identity(s, s) * 0.1;
    let base_w = random_psd(rng, n, 0.3);
    let q_terminal = random_psd(rng, n, 0.5);
    let mut spec =
        SystemSpec::time_invariant(horizon, base_a, base_b, base_q, q_terminal, base_r, base_w);
    if shape.time_varying {
        for k in 1..horizon {
            spec.a[k] = &spec.a[0] + gaussian_matrix(rng, n, n, 0.1 * a_scale);
            spec.b[k] = &spec.b[0] + gaussian_matrix(rng, n, s, 0.1);
            spec.q[k] = random_psd(rng, n, 0.5);
            spec.r[k] = random_psd(rng, s, 0.5) + Mat::identity(s, s) * 0.1;
            spec.w[k] = random_psd(rng, n, 0.3);
        }
    }
    if let Some(m) = shape.obs_dim {
        let c = gaussian_matrix(rng, m, n, 1.0);
        let v = random_psd(rng, m, 0.2) + Mat::identity(m, m) * 0.01;
        spec = spec.with_measurement(c, v);
        if shape.time_varying {
            for k in 1..horizon {
                spec.c[k] = &spec.c[0] + gaussian_matrix(rng, m, n, 0.1);
            }
        }
    }
    LinearSystemModel::new(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_models_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..50 {
            let n = 1 + i % 3;
            let shape = ModelShape::new(n, 1 + i % n, 1 + i % 7)
                .with_measurement(1)
                .time_varying();
            let m = random_model(&mut rng, shape).unwrap();
            assert_eq!(m.state_dim(), n);
            assert!(!m.is_exactly_observed());
        }
    }
}
