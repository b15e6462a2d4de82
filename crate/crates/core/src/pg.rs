//! Exact Polya-Gamma `PG(1, c)` variates.
//!
//! Draws follow Devroye's alternating-series rejection sampler for the
//! Jacobi distribution `J*(1, z)` with `z = |c| / 2`, using a proposal that
//! mixes a truncated inverse-Gaussian on `(0, t]` with a shifted exponential
//! on `(t, ∞)`. The series is expanded only until the accept/reject decision
//! is determined, so the output is exact. `PG(1, c) = J*(1, |c|/2) / 4`.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

/// Switch point between the two proposal pieces.
const TRUNC: f64 = 0.64;
const PI2_8: f64 = PI * PI / 8.0;

/// A single `PG(1, tilt)` draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgDraw {
    pub value: f64,
    pub tilt: f64,
}

impl PgDraw {
    pub fn new<R: Rng + ?Sized>(tilt: f64, rng: &mut R) -> Self {
        Self { value: draw_pg1(tilt, rng), tilt }
    }
}

/// Draws from `PG(1, c)`. The distribution depends on `c` only through `|c|`.
pub fn draw_pg1<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    debug_assert!(c.is_finite(), "PG tilt must be finite");
    let z = 0.5 * c.abs();
    let fz = PI2_8 + 0.5 * z * z;
    let p_exp = mass_texpon(z, fz);

    loop {
        let x = if rng.random::<f64>() < p_exp {
            TRUNC + rng.sample::<f64, _>(Exp1) / fz
        } else {
            truncated_inverse_gaussian(z, rng)
        };

        let mut s = series_coef(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0u32;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_coef(n, x);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += series_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// Mean of `PG(1, c)`: `tanh(c/2) / (2c)`, with the `c → 0` limit `1/4`.
pub fn pg_mean(c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-4 {
        // tanh(x)/x = 1 - x²/3 + 2x⁴/15 with x = c/2
        let x2 = 0.25 * c * c;
        0.25 * (1.0 - x2 / 3.0 + 2.0 * x2 * x2 / 15.0)
    } else {
        (0.5 * c).tanh() / (2.0 * c)
    }
}

/// Variance of `PG(1, c)`, with the `c → 0` limit `1/24`.
pub fn pg_variance(c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-2 {
        let c2 = c * c;
        1.0 / 24.0 - c2 / 120.0 + 17.0 * c2 * c2 / 13440.0
    } else if c > 700.0 {
        0.5 / (c * c * c) - 0.25 / (c * c) * (1.0 / (0.5 * c).cosh()).powi(2)
    } else {
        let sech = 1.0 / (0.5 * c).cosh();
        (c.sinh() - c) * sech * sech / (4.0 * c * c * c)
    }
}

/// Probability of proposing from the exponential tail.
fn mass_texpon(z: f64, fz: f64) -> f64 {
    let inv_sqrt_t = (1.0 / TRUNC).sqrt();
    let b = inv_sqrt_t * (TRUNC * z - 1.0);
    let a = -inv_sqrt_t * (TRUNC * z + 1.0);
    let x0 = fz.ln() + fz * TRUNC;
    let xb = x0 - z + ln_norm_cdf(b);
    let xa = x0 + z + ln_norm_cdf(a);
    let log_ratio = (4.0 / PI).ln() + crate::math::logsumexp(&[xb, xa]);
    crate::math::logistic(-log_ratio)
}

fn ln_norm_cdf(x: f64) -> f64 {
    (0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)).ln()
}

/// n-th term of the alternating series for the `J*(1, 0)` density,
/// using the small-x representation below the switch point.
fn series_coef(n: u32, x: f64) -> f64 {
    let k = n as f64 + 0.5;
    if x > TRUNC {
        PI * k * (-0.5 * PI * PI * k * k * x).exp()
    } else if x > 0.0 {
        let expnt = -1.5 * (FRAC_PI_2.ln() + x.ln()) + PI.ln() + k.ln() - 2.0 * k * k / x;
        expnt.exp()
    } else {
        0.0
    }
}

/// Inverse-Gaussian `IG(1/z, 1)` restricted to `(0, TRUNC]`.
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let mu = if z > 0.0 { 1.0 / z } else { f64::INFINITY };
    if mu > TRUNC {
        // rejection from the truncated 1/chi-square proposal
        loop {
            let x = loop {
                let e1: f64 = rng.sample(Exp1);
                let e2: f64 = rng.sample(Exp1);
                if e1 * e1 <= 2.0 * e2 / TRUNC {
                    let denom = 1.0 + e1 * TRUNC;
                    break TRUNC / (denom * denom);
                }
            };
            let alpha = (-0.5 * z * z * x).exp();
            if rng.random::<f64>() <= alpha {
                return x;
            }
        }
    } else {
        loop {
            let nrm: f64 = rng.sample(StandardNormal);
            let y = nrm * nrm;
            let mut x = mu + 0.5 * mu * mu * y - 0.5 * mu * (4.0 * mu * y + (mu * y).powi(2)).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x <= TRUNC {
                return x;
            }
        }
    }
}
