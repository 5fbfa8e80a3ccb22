//! Logarithm of the modified Bessel function of the first kind.
//!
//! Two evaluation routes share the work:
//!
//! * the ascending power series, summed in the log domain, for `x <= max(20, nu)`;
//! * the uniform (Debye/Olver) asymptotic expansion for larger arguments.
//!
//! The asymptotic route is written in terms of `r = sqrt(nu^2 + x^2)` rather than
//! `x / nu`, so it stays well defined at `nu = 0` where it reduces to the classic
//! large-argument Hankel expansion.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Largest order accepted by [`log_bessel_i`].
pub const MAX_ORDER: f64 = 500.0;
/// Largest argument accepted by [`log_bessel_i`].
pub const MAX_ARGUMENT: f64 = 1.0e6;

const SERIES_CROSSOVER: f64 = 20.0;
const DEBYE_TERMS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BesselMethod {
    Series,
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogBesselResult {
    pub value: f64,
    pub method: BesselMethod,
}

/// `log I_nu(x)` for `0 <= nu <= 500`, `0 < x <= 1e6`.
pub fn log_bessel_i(nu: f64, x: f64) -> Result<LogBesselResult> {
    let in_envelope = nu.is_finite()
        && x.is_finite()
        && (0.0..=MAX_ORDER).contains(&nu)
        && x > 0.0
        && x <= MAX_ARGUMENT;
    if !in_envelope {
        return Err(Error::OutOfEnvelope { nu, x });
    }
    if x <= SERIES_CROSSOVER.max(nu) {
        Ok(LogBesselResult {
            value: log_series(nu, x),
            method: BesselMethod::Series,
        })
    } else {
        Ok(LogBesselResult {
            value: log_uniform_asymptotic(nu, x),
            method: BesselMethod::Asymptotic,
        })
    }
}

/// `I_nu(x) = (x/2)^nu * sum_k (x^2/4)^k / (k! Gamma(k + nu + 1))`.
fn log_series(nu: f64, x: f64) -> f64 {
    let log_q = 2.0 * (0.5 * x).ln();
    let mut log_term = 0.0_f64;
    let mut log_sum = 0.0_f64;
    let mut k = 1.0_f64;
    loop {
        log_term += log_q - (k * (k + nu)).ln();
        log_sum = log_add_exp(log_sum, log_term);
        // terms are decreasing once k(k+nu) exceeds x^2/4
        if k * (k + nu) > 0.25 * x * x && log_term < log_sum - 40.0 {
            break;
        }
        k += 1.0;
    }
    nu * (0.5 * x).ln() - libm::lgamma(nu + 1.0) + log_sum
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a >= b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// `I_nu(x) ~ exp(nu*eta) / sqrt(2 pi r) * sum_k u_k(t) / nu^k`, with
/// `r = sqrt(nu^2 + x^2)`, `t = nu / r` and `nu*eta = r + nu*ln(x / (nu + r))`.
///
/// Every monomial of `u_k` has degree at least `k`, so `u_k(t) / nu^k` is
/// evaluated as `r^-k * sum_j c_kj t^(j-k)`.
fn log_uniform_asymptotic(nu: f64, x: f64) -> f64 {
    let r = nu.hypot(x);
    let t = nu / r;
    let nu_eta = if nu == 0.0 {
        r
    } else {
        r + nu * (x / (nu + r)).ln()
    };

    let polys = debye_polynomials();
    let mut sum = 1.0;
    let mut prev = f64::INFINITY;
    let mut r_pow = 1.0;
    for poly in polys.iter().skip(1) {
        r_pow /= r;
        let k = poly.degree_floor;
        let mut acc = 0.0;
        let mut t_pow = 1.0;
        for (j, c) in poly.coeffs.iter().enumerate().skip(k) {
            if j > k {
                t_pow *= t;
            }
            acc += c * t_pow;
        }
        let term = acc * r_pow;
        // asymptotic series: stop at the smallest term
        if term.abs() > prev {
            break;
        }
        sum += term;
        prev = term.abs();
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    nu_eta - 0.5 * (2.0 * std::f64::consts::PI * r).ln() + sum.ln()
}

struct DebyePoly {
    coeffs: Vec<f64>,
    degree_floor: usize,
}

/// `u_0 = 1`, `u_{k+1}(t) = t^2 (1 - t^2) u_k'(t) / 2 + 1/8 * int_0^t (1 - 5 s^2) u_k(s) ds`.
fn debye_polynomials() -> &'static [DebyePoly] {
    static POLYS: OnceLock<Vec<DebyePoly>> = OnceLock::new();
    POLYS.get_or_init(|| {
        let mut out = vec![DebyePoly {
            coeffs: vec![1.0],
            degree_floor: 0,
        }];
        for k in 0..DEBYE_TERMS {
            let u = &out[k].coeffs;
            let mut next = vec![0.0; u.len() + 3];
            for (j, &c) in u.iter().enumerate().skip(1) {
                let d = j as f64 * c;
                // (t^2 - t^4)/2 * d t^(j-1)
                next[j + 1] += 0.5 * d;
                next[j + 3] -= 0.5 * d;
            }
            for (j, &c) in u.iter().enumerate() {
                next[j + 1] += c / (8.0 * (j as f64 + 1.0));
                next[j + 3] -= 5.0 * c / (8.0 * (j as f64 + 3.0));
            }
            while next.last() == Some(&0.0) {
                next.pop();
            }
            out.push(DebyePoly {
                coeffs: next,
                degree_floor: k + 1,
            });
        }
        out
    })
}
