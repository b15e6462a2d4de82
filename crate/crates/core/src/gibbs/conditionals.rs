//! Full conditionals of the discrete latent quantities and Gaussian posteriors
//! of the coefficient rows.
//!
//! The functions returning probability vectors are the exact normalized
//! conditionals the sampler draws from; tests compare them against direct
//! enumeration.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::math::{log1pexp, logsumexp, softmax, GaussianPosterior};
use crate::model::{
    binary_loglik_eta, class_logits, linear_predictor, log_prob_w_mask, mask_of, EntryKind, Hyperparams, Mask,
    ModelConfig, Params,
};

/// Largest `q` for which block updates enumerate `2^q` candidates.
pub const MAX_BLOCK_Q: usize = 20;

/// Largest `q` for which per-entry likelihood tables are precomputed.
const TABLE_MAX_Q: usize = 10;

/// Log-likelihood evaluator `ℓ_i(y | active)` with optional lookup tables over
/// every active-attribute mask.
pub struct LikTable<'a> {
    config: &'a ModelConfig,
    params: &'a Params,
    tables: Option<Vec<Vec<f64>>>,
}

impl<'a> LikTable<'a> {
    pub fn new(config: &'a ModelConfig, params: &'a Params) -> Self {
        let tables = (config.q <= TABLE_MAX_Q).then(|| {
            let masks = 1usize << config.q;
            config
                .entries
                .iter()
                .zip(&params.beta)
                .map(|(kind, coefs)| {
                    let width = table_width(*kind);
                    let mut t = vec![0.0; masks * width];
                    for a in 0..masks as Mask {
                        let base = a as usize * width;
                        match kind {
                            EntryKind::Binary => {
                                let eta = linear_predictor(&coefs[0], a);
                                t[base] = binary_loglik_eta(0, eta);
                                t[base + 1] = binary_loglik_eta(1, eta);
                            }
                            EntryKind::Count => t[base] = linear_predictor(&coefs[0], a),
                            EntryKind::Categorical(levels) => {
                                let etas: Vec<f64> =
                                    (0..*levels as usize).map(|l| linear_predictor(&coefs[l], a)).collect();
                                let lse = logsumexp(&etas);
                                for (l, e) in etas.iter().enumerate() {
                                    t[base + l] = e - lse;
                                }
                            }
                        }
                    }
                    t
                })
                .collect()
        });
        Self { config, params, tables }
    }

    /// `log p(y_i = y | w, g_i, β_i)` where `active = g_i & w`.
    #[inline]
    pub fn ll(&self, i: usize, y: u32, active: Mask) -> f64 {
        let kind = self.config.entries[i];
        match &self.tables {
            Some(t) => {
                let width = table_width(kind);
                let base = active as usize * width;
                match kind {
                    EntryKind::Binary => t[i][base + y as usize],
                    EntryKind::Categorical(_) => t[i][base + y as usize - 1],
                    EntryKind::Count => {
                        let eta = t[i][base];
                        y as f64 * eta - eta.exp() - crate::math::ln_factorial(y as u64)
                    }
                }
            }
            None => crate::model::entry_loglik(kind, y, &self.params.beta[i], active),
        }
    }

    /// `Σ_i weight_i · ℓ_i(y_i | w)` over one observation row.
    #[inline]
    pub fn row_loglik(&self, y: impl Iterator<Item = u32>, w: Mask, g_masks: &[Mask], weights: Option<&[f64]>) -> f64 {
        let mut total = 0.0;
        for (i, yi) in y.enumerate() {
            let wt = weights.map_or(1.0, |w| w[i]);
            if wt != 0.0 {
                total += wt * self.ll(i, yi, g_masks[i] & w);
            }
        }
        total
    }
}

fn table_width(kind: EntryKind) -> usize {
    match kind {
        EntryKind::Binary => 2,
        EntryKind::Count => 1,
        EntryKind::Categorical(l) => l as usize,
    }
}

pub fn check_block_q(q: usize) -> Result<()> {
    if q > MAX_BLOCK_Q {
        return Err(Error::TooManyAttributes { q, max: MAX_BLOCK_Q });
    }
    Ok(())
}

/// Unnormalized log weights of `z | w, x`.
pub fn z_log_weights(x: &[f64], w: Mask, params: &Params) -> Vec<f64> {
    let mut lw = class_logits(x, &params.gamma);
    for (h, l) in lw.iter_mut().enumerate() {
        *l += log_prob_w_mask(w, h, &params.alpha);
    }
    lw
}

/// `P(z = h | w, x, Γ, A)` for every class.
pub fn z_conditional(x: &[f64], w: &[u8], params: &Params) -> Result<Vec<f64>> {
    if w.len() != params.alpha.nrows() || x.len() + 1 != params.gamma.ncols() {
        return Err(Error::DimensionMismatch("w or x does not match the parameters".into()));
    }
    Ok(softmax(&z_log_weights(x, mask_of(w), params)))
}

/// Unnormalized log weights of `w | z, y` over all `2^q` masks.
pub(crate) fn w_block_log_weights(
    table: &LikTable,
    y: &[u32],
    z: usize,
    params: &Params,
    g_masks: &[Mask],
    weights: Option<&[f64]>,
) -> Vec<f64> {
    let q = params.alpha.nrows();
    (0..1u64 << q)
        .map(|m| log_prob_w_mask(m, z, &params.alpha) + table.row_loglik(y.iter().copied(), m, g_masks, weights))
        .collect()
}

/// Log-odds of `w_j = 1` against `w_j = 0` given everything else.
pub(crate) fn w_entry_log_odds(
    table: &LikTable,
    y: &[u32],
    w: Mask,
    j: usize,
    z: usize,
    params: &Params,
    g_masks: &[Mask],
    weights: Option<&[f64]>,
) -> f64 {
    let a = params.alpha[(j, z)];
    let bit = 1 << j;
    let (on, off) = (w | bit, w & !bit);
    let mut lo = a.ln() - (1.0 - a).ln();
    for (i, &yi) in y.iter().enumerate() {
        if g_masks[i] & bit == 0 {
            continue;
        }
        let wt = weights.map_or(1.0, |w| w[i]);
        if wt != 0.0 {
            lo += wt * (table.ll(i, yi, g_masks[i] & on) - table.ll(i, yi, g_masks[i] & off));
        }
    }
    lo
}

fn g_masks(params: &Params) -> Vec<Mask> {
    (0..params.g.nrows()).map(|i| params.g_mask(i)).collect()
}

/// Exact `P(w | z, y, G, B, A)` over all masks; index `m` is the mask with bit `j` = `w_j`.
pub fn w_block_conditional(config: &ModelConfig, params: &Params, y: &[u32], z: usize) -> Result<Vec<f64>> {
    check_block_q(config.q)?;
    check_row(config, params, y, z)?;
    let table = LikTable::new(config, params);
    Ok(softmax(&w_block_log_weights(&table, y, z, params, &g_masks(params), None)))
}

/// `P(w_j = 1 | w_{-j}, z, y, G, B, A)`.
pub fn w_entry_conditional(
    config: &ModelConfig,
    params: &Params,
    y: &[u32],
    w: &[u8],
    j: usize,
    z: usize,
) -> Result<f64> {
    check_row(config, params, y, z)?;
    if w.len() != config.q || j >= config.q {
        return Err(Error::DimensionMismatch("w or j does not match q".into()));
    }
    let table = LikTable::new(config, params);
    let lo = w_entry_log_odds(&table, y, mask_of(w), j, z, params, &g_masks(params), None);
    Ok(crate::math::logistic(lo))
}

fn check_row(config: &ModelConfig, params: &Params, y: &[u32], z: usize) -> Result<()> {
    params.validate(config)?;
    if y.len() != config.p || z >= config.d {
        return Err(Error::DimensionMismatch("y row or z does not match the configuration".into()));
    }
    for (i, (kind, &v)) in config.entries.iter().zip(y).enumerate() {
        if !kind.in_support(v) {
            return Err(Error::OutOfSupport { row: 0, col: i, value: v.to_string(), kind: kind.label() });
        }
    }
    Ok(())
}

/// Sufficient statistics of one `G` row: distinct `(w, y)` pairs and their counts.
pub(crate) fn pattern_counts(w_masks: &[Mask], y: impl Iterator<Item = u32>) -> Vec<(Mask, u32, f64)> {
    let mut pairs: Vec<(Mask, u32)> = w_masks.iter().copied().zip(y).collect();
    pairs.sort_unstable();
    let mut out: Vec<(Mask, u32, f64)> = Vec::new();
    for (m, y) in pairs {
        match out.last_mut() {
            Some(last) if last.0 == m && last.1 == y => last.2 += 1.0,
            _ => out.push((m, y, 1.0)),
        }
    }
    out
}

/// Logits `θ_{j,0} + θ_jᵀ t_i` of the `G` prior for one row.
pub(crate) fn g_prior_logits(theta: &DMatrix<f64>, t_design: &DVector<f64>) -> Vec<f64> {
    (0..theta.nrows()).map(|j| theta.row(j).iter().zip(t_design.iter()).map(|(a, b)| a * b).sum()).collect()
}

fn g_row_loglik(table: &LikTable, i: usize, g: Mask, counts: &[(Mask, u32, f64)]) -> f64 {
    counts.iter().map(|&(w, y, c)| c * table.ll(i, y, g & w)).sum()
}

/// Unnormalized log weights of `g_i` over all `2^q` masks.
pub(crate) fn g_block_log_weights(
    table: &LikTable,
    i: usize,
    prior_logits: &[f64],
    counts: &[(Mask, u32, f64)],
    weight: f64,
) -> Vec<f64> {
    let q = prior_logits.len();
    let log_norm: f64 = prior_logits.iter().map(|&l| log1pexp(l)).sum();
    (0..1u64 << q)
        .map(|g| {
            let prior: f64 = (0..q).filter(|j| (g >> j) & 1 == 1).map(|j| prior_logits[j]).sum::<f64>() - log_norm;
            prior + weight * g_row_loglik(table, i, g, counts)
        })
        .collect()
}

pub(crate) fn g_entry_log_odds(
    table: &LikTable,
    i: usize,
    g: Mask,
    j: usize,
    prior_logit: f64,
    counts: &[(Mask, u32, f64)],
    weight: f64,
) -> f64 {
    let bit = 1 << j;
    let mut lo = prior_logit;
    for &(w, y, c) in counts {
        if w & bit != 0 {
            lo += weight * c * (table.ll(i, y, (g | bit) & w) - table.ll(i, y, (g & !bit) & w));
        }
    }
    lo
}

/// Exact `P(g_i | W, y_i, B_i, Θ)` over all masks.
pub fn g_block_conditional(
    config: &ModelConfig,
    params: &Params,
    w: &DMatrix<u8>,
    y_col: &[u32],
    t_design: &DVector<f64>,
    i: usize,
) -> Result<Vec<f64>> {
    check_block_q(config.q)?;
    params.validate(config)?;
    if w.nrows() != y_col.len() || w.ncols() != config.q || i >= config.p {
        return Err(Error::DimensionMismatch("W, y column or i inconsistent".into()));
    }
    let table = LikTable::new(config, params);
    let w_masks: Vec<Mask> = (0..w.nrows()).map(|n| crate::model::row_mask(w, n)).collect();
    let counts = pattern_counts(&w_masks, y_col.iter().copied());
    let logits = g_prior_logits(&params.theta, t_design);
    Ok(softmax(&g_block_log_weights(&table, i, &logits, &counts, 1.0)))
}

/// `P(g_{i,j} = 1 | g_{i,-j}, W, y_i, B_i, Θ)`.
pub fn g_entry_conditional(
    config: &ModelConfig,
    params: &Params,
    w: &DMatrix<u8>,
    y_col: &[u32],
    t_design: &DVector<f64>,
    i: usize,
    j: usize,
) -> Result<f64> {
    params.validate(config)?;
    if w.nrows() != y_col.len() || w.ncols() != config.q || i >= config.p || j >= config.q {
        return Err(Error::DimensionMismatch("W, y column, i or j inconsistent".into()));
    }
    let table = LikTable::new(config, params);
    let w_masks: Vec<Mask> = (0..w.nrows()).map(|n| crate::model::row_mask(w, n)).collect();
    let counts = pattern_counts(&w_masks, y_col.iter().copied());
    let logits = g_prior_logits(&params.theta, t_design);
    let lo = g_entry_log_odds(&table, i, params.g_mask(i), j, logits[j], &counts, 1.0);
    Ok(crate::math::logistic(lo))
}

/// Gaussian full conditional of a coefficient row under Polya-Gamma
/// augmentation: precision `V₀⁻¹ + Σ ω x xᵀ`, shift `V₀⁻¹ m₀ + Σ κ x`.
///
/// `rows` yields `(x, ω, κ)` where `x` is given sparsely as the set of
/// nonzero unit coordinates after the intercept (an attribute mask), or
/// densely via [`gaussian_posterior_dense`].
pub fn gaussian_posterior_masked(
    prior_precision: &DMatrix<f64>,
    prior_shift: &DVector<f64>,
    rows: impl Iterator<Item = (Mask, f64, f64)>,
    what: &str,
) -> Result<GaussianPosterior> {
    let k = prior_shift.len();
    let mut prec = prior_precision.clone();
    let mut shift = prior_shift.clone();
    let mut idx = Vec::with_capacity(k);
    for (active, omega, kappa) in rows {
        idx.clear();
        idx.push(0usize);
        let mut m = active;
        while m != 0 {
            idx.push(1 + m.trailing_zeros() as usize);
            m &= m - 1;
        }
        for &a in &idx {
            shift[a] += kappa;
            for &b in &idx {
                prec[(a, b)] += omega;
            }
        }
    }
    GaussianPosterior::from_precision(prec, &shift, what)
}

/// Dense-design version of [`gaussian_posterior_masked`].
pub fn gaussian_posterior_dense<'x>(
    prior_precision: &DMatrix<f64>,
    prior_shift: &DVector<f64>,
    rows: impl Iterator<Item = (&'x DVector<f64>, f64, f64)>,
    what: &str,
) -> Result<GaussianPosterior> {
    let mut prec = prior_precision.clone();
    let mut shift = prior_shift.clone();
    for (x, omega, kappa) in rows {
        prec.syger(omega, x, x, 1.0);
        shift.axpy(kappa, x, 1.0);
    }
    // syger fills the lower triangle only
    prec.fill_upper_triangle_with_lower_triangle();
    GaussianPosterior::from_precision(prec, &shift, what)
}

/// Posterior of a binary-entry coefficient row from explicit designs.
///
/// `designs[n]` is `(1, g_i ∘ w^{(n)})`, `kappa[n] = y_n − 1/2`.
pub fn beta_row_posterior(
    hyper: &Hyperparams,
    designs: &[DVector<f64>],
    omega: &[f64],
    y: &[u8],
) -> Result<GaussianPosterior> {
    if designs.len() != omega.len() || designs.len() != y.len() {
        return Err(Error::DimensionMismatch("designs, omega and y must have equal length".into()));
    }
    let prec0 = crate::math::spd_inverse(&hyper.v_beta, "V_beta")?;
    let shift0 = &prec0 * &hyper.m_beta;
    gaussian_posterior_dense(
        &prec0,
        &shift0,
        designs.iter().zip(omega).zip(y).map(|((x, &o), &yy)| (x, o, yy as f64 - 0.5)),
        "beta row",
    )
}
