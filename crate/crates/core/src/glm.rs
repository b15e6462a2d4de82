//! Categorical and count outcome layers.
//!
//! Categorical entries use a multinomial-logistic link with the last level as
//! baseline; each free level is updated with its own Polya-Gamma variables
//! given the others. Count entries use a Poisson log link and a random-walk
//! Metropolis step on the whole coefficient row.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::conditionals::gaussian_posterior_masked;
use crate::math::logsumexp;
use crate::model::{entry_loglik, linear_predictor, mask_of, EntryCoefs, EntryKind, Mask};
use crate::pg::draw_pg1;

/// Random-walk proposal settings for count rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MhTuning {
    pub step_scale: f64,
}

impl Default for MhTuning {
    fn default() -> Self {
        Self { step_scale: 0.1 }
    }
}

impl MhTuning {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_scale > 0.0 && self.step_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("MH step scale must be positive, got {}", self.step_scale)));
        }
        Ok(())
    }
}

/// Log-likelihood of one outcome of any kind.
pub fn log_lik_entry_general(y: u32, w: &[u8], kind: EntryKind, g_i: &[u8], coefs: &EntryCoefs) -> Result<f64> {
    if w.len() != g_i.len() || coefs.len() != kind.n_levels() || coefs.iter().any(|c| c.len() != w.len() + 1) {
        return Err(Error::DimensionMismatch("w, g_i and coefficient shapes disagree".into()));
    }
    if !kind.in_support(y) {
        return Err(Error::OutOfSupport { row: 0, col: 0, value: y.to_string(), kind: kind.label() });
    }
    Ok(entry_loglik(kind, y, coefs, mask_of(w) & mask_of(g_i)))
}

/// Redraws every non-baseline level of a categorical row in turn.
///
/// `actives[n] = g_i & w^{(n)}`, `y[n] ∈ 1..=D`. For each level the
/// augmentation variables `ω_{i,ℓ}^{(n)} ~ PG(1, η_ℓ − log Σ_{ℓ'≠ℓ} e^{η_ℓ'})` are
/// drawn from the current rows and written into `omega` (level-major).
pub fn update_categorical_rows<R: Rng + ?Sized>(
    coefs: &mut EntryCoefs,
    actives: &[Mask],
    y: &[u32],
    omega: &mut [f64],
    prior_precision: &DMatrix<f64>,
    prior_shift: &DVector<f64>,
    rng: &mut R,
) -> Result<()> {
    let levels = coefs.len();
    let n = actives.len();
    if y.len() != n || omega.len() != n * levels {
        return Err(Error::DimensionMismatch("categorical update inputs disagree".into()));
    }
    let mut etas = vec![0.0; levels];
    let mut others = Vec::with_capacity(levels);
    let mut offsets = vec![0.0; n];
    for level in 0..levels - 1 {
        for obs in 0..n {
            for (l, e) in etas.iter_mut().enumerate() {
                *e = linear_predictor(&coefs[l], actives[obs]);
            }
            others.clear();
            others.extend(etas.iter().enumerate().filter(|(l, _)| *l != level).map(|(_, e)| *e));
            let c = logsumexp(&others);
            let tilt = etas[level] - c;
            if !tilt.is_finite() {
                return Err(Error::NonFinite(format!("categorical tilt at observation {obs}")));
            }
            omega[level * n + obs] = draw_pg1(tilt, rng);
            offsets[obs] = c;
        }
        let post = gaussian_posterior_masked(
            prior_precision,
            prior_shift,
            (0..n).map(|obs| {
                let om = omega[level * n + obs];
                let kappa = if y[obs] as usize == level + 1 { 0.5 } else { -0.5 };
                (actives[obs], om, kappa + om * offsets[obs])
            }),
            "categorical level row",
        )?;
        coefs[level] = post.sample(rng);
    }
    Ok(())
}

/// Unnormalized log posterior of a count row: Gaussian prior plus Poisson
/// log-likelihood `Σ_n y η − e^η` (constants dropped).
pub fn poisson_log_posterior(
    coef: &DVector<f64>,
    actives: &[Mask],
    y: &[u32],
    prior_precision: &DMatrix<f64>,
    prior_mean: &DVector<f64>,
) -> f64 {
    let diff = coef - prior_mean;
    let prior = -0.5 * diff.dot(&(prior_precision * &diff));
    let lik: f64 = actives
        .iter()
        .zip(y)
        .map(|(&a, &yy)| {
            let eta = linear_predictor(coef, a);
            yy as f64 * eta - eta.exp()
        })
        .sum();
    prior + lik
}

/// One random-walk Metropolis step on a count row; returns whether the
/// proposal was accepted.
pub fn mh_update_poisson_row<R: Rng + ?Sized>(
    coef: &mut DVector<f64>,
    actives: &[Mask],
    y: &[u32],
    prior_precision: &DMatrix<f64>,
    prior_mean: &DVector<f64>,
    tuning: &MhTuning,
    rng: &mut R,
) -> bool {
    let proposal = coef.map(|c| c + tuning.step_scale * rng.sample::<f64, _>(StandardNormal));
    let log_ratio = poisson_log_posterior(&proposal, actives, y, prior_precision, prior_mean)
        - poisson_log_posterior(coef, actives, y, prior_precision, prior_mean);
    let accept = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
    if accept {
        *coef = proposal;
    }
    accept
}
