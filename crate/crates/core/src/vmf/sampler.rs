use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use super::VmfParams;
use crate::linalg::{dot, normalize};

/// Seeded von Mises-Fisher sampler using Wood's rejection scheme.
///
/// Holds its own generator; clone it with a fresh seed per thread.
#[derive(Debug, Clone)]
pub struct VmfSampler {
    params: VmfParams,
    b: f64,
    x0: f64,
    c: f64,
    beta: Beta<f64>,
    rng: ChaCha8Rng,
}

impl VmfSampler {
    pub fn new(params: VmfParams, seed: u64) -> Self {
        let m = (params.dim() - 1) as f64;
        let kappa = params.kappa();
        // (-2k + sqrt(4k^2 + m^2)) / m, rationalized to avoid cancellation
        let b = m / (2.0 * kappa + (4.0 * kappa * kappa + m * m).sqrt());
        let x0 = (1.0 - b) / (1.0 + b);
        let c = kappa * x0 + m * (1.0 - x0 * x0).ln();
        let beta = Beta::new(m / 2.0, m / 2.0).expect("beta shape is positive");
        Self {
            params,
            b,
            x0,
            c,
            beta,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn params(&self) -> &VmfParams {
        &self.params
    }

    /// Component of the draw along the mean direction.
    fn sample_w(&mut self) -> f64 {
        let m = (self.params.dim() - 1) as f64;
        let kappa = self.params.kappa();
        loop {
            let z = self.beta.sample(&mut self.rng);
            let w = (1.0 - (1.0 + self.b) * z) / (1.0 - (1.0 - self.b) * z);
            let u: f64 = self.rng.random();
            if kappa * w + m * (1.0 - self.x0 * w).ln() - self.c >= u.ln() {
                return w;
            }
        }
    }

    /// Uniform unit direction orthogonal to the mean.
    fn sample_tangent(&mut self) -> Vec<f64> {
        let mu = self.params.mu();
        loop {
            let mut v: Vec<f64> = (0..mu.len())
                .map(|_| StandardNormal.sample(&mut self.rng))
                .collect();
            let along = dot(&v, mu);
            v.iter_mut().zip(mu).for_each(|(v, m)| *v -= along * m);
            if crate::linalg::norm(&v) > 1e-12 {
                normalize(&mut v);
                return v;
            }
        }
    }

    pub fn sample_one(&mut self) -> Vec<f64> {
        let w = self.sample_w();
        let v = self.sample_tangent();
        let s = (1.0 - w * w).max(0.0).sqrt();
        let mut x: Vec<f64> = self
            .params
            .mu()
            .iter()
            .zip(&v)
            .map(|(m, v)| w * m + s * v)
            .collect();
        normalize(&mut x);
        x
    }
}

/// Draws `n` i.i.d. unit vectors from `vMF(mu, kappa)`; deterministic given `seed`.
pub fn sample(params: &VmfParams, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut sampler = VmfSampler::new(params.clone(), seed);
    (0..n).map(|_| sampler.sample_one()).collect()
}
