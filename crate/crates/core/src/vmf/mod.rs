//! Von Mises-Fisher distribution on the unit sphere `S^{p-1}`.

mod bessel;
mod sampler;

pub use bessel::{log_bessel_i, BesselMethod, LogBesselResult, MAX_ARGUMENT, MAX_ORDER};
pub use sampler::{sample, VmfSampler};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

#[derive(Debug, Clone, PartialEq)]
pub struct VmfParams {
    mu: Vec<f64>,
    kappa: f64,
}

impl VmfParams {
    /// `mu` must be unit length to 1e-9 and `kappa` strictly positive.
    pub fn new(mu: Vec<f64>, kappa: f64) -> Result<Self> {
        if mu.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "vMF dimension must be at least 2, got {}",
                mu.len()
            )));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "vMF concentration must be positive, got {kappa}"
            )));
        }
        let n = norm(&mu);
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::NonUnitVector { norm: n });
        }
        Ok(Self { mu, kappa })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// `log c_p(kappa) = (p/2 - 1) log kappa - (p/2) log 2pi - log I_{p/2-1}(kappa)`.
pub fn log_norm_const(p: usize, kappa: f64) -> Result<f64> {
    if p < 2 {
        return Err(Error::InvalidConfig(format!("dimension {p} < 2")));
    }
    let half = p as f64 / 2.0;
    let log_i = log_bessel_i(half - 1.0, kappa)?.value;
    Ok((half - 1.0) * kappa.ln() - half * (2.0 * std::f64::consts::PI).ln() - log_i)
}

pub fn log_density(params: &VmfParams, x: &[f64]) -> Result<f64> {
    if x.len() != params.dim() {
        return Err(Error::InvalidConfig(format!(
            "point has dimension {}, distribution has {}",
            x.len(),
            params.dim()
        )));
    }
    let n = norm(x);
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::NonUnitVector { norm: n });
    }
    Ok(log_norm_const(params.dim(), params.kappa)? + params.kappa * dot(x, &params.mu))
}

/// Mean resultant length `A_p(kappa) = I_{p/2}(kappa) / I_{p/2-1}(kappa)`,
/// i.e. the expected value of `x . mu` under the distribution.
pub fn mean_resultant_length(p: usize, kappa: f64) -> Result<f64> {
    if p < 2 {
        return Err(Error::InvalidConfig(format!("dimension {p} < 2")));
    }
    let half = p as f64 / 2.0;
    let num = log_bessel_i(half, kappa)?.value;
    let den = log_bessel_i(half - 1.0, kappa)?.value;
    Ok((num - den).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn norm_const_p3_closed_form() {
        for kappa in [0.1_f64, 1.0, 5.0, 40.0, 300.0] {
            // c_3 = kappa / (4 pi sinh kappa), sinh in log form
            let log_sinh = kappa + (-(-2.0 * kappa).exp_m1() / 2.0).ln();
            let want = kappa.ln() - (4.0 * PI).ln() - log_sinh;
            let got = log_norm_const(3, kappa).unwrap();
            assert!((got - want).abs() < 1e-10, "kappa={kappa}: {got} vs {want}");
        }
        let want = (5.0 / (4.0 * PI * 5.0_f64.sinh())).ln();
        assert!((log_norm_const(3, 5.0).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn norm_const_p2_integrates_on_circle() {
        let kappa = 3.0;
        let mu = vec![1.0, 0.0];
        let params = VmfParams::new(mu, kappa).unwrap();
        // c_2 = 1 / (2 pi I_0(kappa))
        let direct = -(2.0 * PI).ln() - log_bessel_i(0.0, kappa).unwrap().value;
        assert!((log_norm_const(2, kappa).unwrap() - direct).abs() < 1e-14);

        // periodic trapezoid rule converges geometrically
        let n = 2000;
        let total: f64 = (0..n)
            .map(|i| {
                let th = 2.0 * PI * i as f64 / n as f64;
                log_density(&params, &[th.cos(), th.sin()]).unwrap().exp()
            })
            .sum::<f64>()
            * (2.0 * PI / n as f64);
        assert!((total - 1.0).abs() < 1e-10, "integral {total}");
    }

    #[test]
    fn density_integrates_to_one_monte_carlo() {
        let params = VmfParams::new(vec![0.0, 0.0, 1.0], 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let area = 4.0 * PI;
        let log_c = log_norm_const(3, 2.0).unwrap();
        let mut acc = 0.0;
        for _ in 0..n {
            // uniform on S^2 via Archimedes: z uniform in [-1, 1]
            let z: f64 = rng.random_range(-1.0..1.0);
            acc += (log_c + 2.0 * z).exp();
        }
        let integral = area * acc / n as f64;
        assert!((integral - 1.0).abs() < 0.01, "integral {integral}");
        // log_density agrees with the inlined expression
        let x = [0.6, 0.0, 0.8];
        assert!((log_density(&params, &x).unwrap() - (log_c + 1.6)).abs() < 1e-14);
    }

    #[test]
    fn density_extremes_and_antipodal_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = 10;
        let mut mu: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        crate::linalg::normalize(&mut mu);
        let kappa = 7.5;
        let params = VmfParams::new(mu.clone(), kappa).unwrap();
        let log_c = log_norm_const(p, kappa).unwrap();
        assert!((log_density(&params, &mu).unwrap() - (log_c + kappa)).abs() < 1e-12);
        let neg: Vec<f64> = mu.iter().map(|v| -v).collect();
        assert!((log_density(&params, &neg).unwrap() - (log_c - kappa)).abs() < 1e-12);

        for _ in 0..20 {
            let mut x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            crate::linalg::normalize(&mut x);
            let nx: Vec<f64> = x.iter().map(|v| -v).collect();
            let diff =
                log_density(&params, &x).unwrap() - log_density(&params, &nx).unwrap();
            assert!((diff - 2.0 * kappa * dot(&x, &mu)).abs() < 1e-10);
        }
    }

    #[test]
    fn density_rejects_non_unit() {
        let params = VmfParams::new(vec![1.0, 0.0], 1.0).unwrap();
        assert!(matches!(
            log_density(&params, &[1.1, 0.0]),
            Err(Error::NonUnitVector { .. })
        ));
    }

    #[test]
    fn params_validation() {
        assert!(VmfParams::new(vec![1.0], 1.0).is_err());
        assert!(VmfParams::new(vec![1.0, 0.0], 0.0).is_err());
        assert!(VmfParams::new(vec![1.0, 1e-4], 1.0).is_err());
        assert!(VmfParams::new(vec![1.0, 0.0], 1.0).is_ok());
    }

    #[test]
    fn mean_resultant_small_kappa() {
        let a = mean_resultant_length(3, 1e-4).unwrap();
        assert!((a - 1e-4 / 3.0).abs() < 1e-5);
    }

    #[test]
    fn mean_resultant_p3_closed_form() {
        let k: f64 = 2.0;
        let want = 1.0 / k.tanh() - 1.0 / k;
        assert!((mean_resultant_length(3, k).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn mean_resultant_monotone_in_kappa() {
        let a1 = mean_resultant_length(100, 1.0).unwrap();
        let a10 = mean_resultant_length(100, 10.0).unwrap();
        let a100 = mean_resultant_length(100, 100.0).unwrap();
        assert!(0.0 < a1 && a1 < a10 && a10 < a100 && a100 < 1.0);
    }
}
