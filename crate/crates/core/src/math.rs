//! Numerically stable scalar helpers and small dense linear algebra.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn log1pexp(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Normalizes log-weights into probabilities with max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// Draws an index from unnormalized log-weights.
pub fn sample_log_weights<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let probs = softmax(log_weights);
    sample_probs(&probs, rng)
}

pub fn sample_probs<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // rounding left u beyond the accumulated mass; pick the last positive entry
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

pub fn ln_factorial(y: u64) -> f64 {
    statrs::function::gamma::ln_gamma(y as f64 + 1.0)
}

/// Gaussian with precision `precision` and natural mean `shift`, i.e.
/// mean `precision⁻¹ shift` and covariance `precision⁻¹`.
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl GaussianPosterior {
    pub fn from_precision(precision: DMatrix<f64>, shift: &DVector<f64>, what: &str) -> Result<Self> {
        let chol = precision.cholesky().ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))?;
        let mean = chol.solve(shift);
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{what} posterior mean")));
        }
        Ok(Self { mean, chol })
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// `mean + L⁻ᵀ ε` where `precision = L Lᵀ`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let k = self.mean.len();
        let eps = DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let l = self.chol.l();
        let z = l.transpose().solve_upper_triangular(&eps).expect("cholesky factor has a positive diagonal");
        &self.mean + z
    }
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse()).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// Multivariate normal draw given mean and covariance.
pub fn sample_mvn<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut R) -> Result<DVector<f64>> {
    let chol = cov.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite("prior covariance".into()))?;
    let k = mean.len();
    let eps = DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
    Ok(mean + chol.l() * eps)
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
