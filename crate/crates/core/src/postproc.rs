//! WAIC, label canonicalization, loading refinement and posterior summaries.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gibbs::PosteriorSamples;
use crate::math::{logsumexp, quantile_sorted};
use crate::model::{EntryKind, ModelConfig, Params};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaicResult {
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
}

/// WAIC from an `S × N` matrix of per-sample per-observation log-likelihoods.
///
/// `lppd = Σ_n log((1/S) Σ_s e^{ℓ(s,n)})`, `p_waic = Σ_n Var_s ℓ(s,n)` with
/// divisor `S − 1` (zero when `S = 1`).
pub fn waic(loglik: &DMatrix<f64>) -> Result<WaicResult> {
    let (s, n) = loglik.shape();
    if s == 0 || n == 0 {
        return Err(Error::Empty("log-likelihood matrix".into()));
    }
    if loglik.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("log-likelihood matrix".into()));
    }
    let log_s = (s as f64).ln();
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    for col in loglik.column_iter() {
        let values: Vec<f64> = col.iter().copied().collect();
        lppd += logsumexp(&values) - log_s;
        if s > 1 {
            let mean = values.iter().sum::<f64>() / s as f64;
            p_waic += values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s - 1) as f64;
        }
    }
    Ok(WaicResult { waic: -2.0 * (lppd - p_waic), lppd, p_waic })
}

/// Column permutations applied by [`relabel`]: new attribute `k` is old
/// attribute `attributes[k]`, new class `k` is old class `classes[k]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Relabeling {
    pub attributes: Vec<usize>,
    pub classes: Vec<usize>,
}

impl Relabeling {
    pub fn identity(q: usize, d: usize) -> Self {
        Self { attributes: (0..q).collect(), classes: (0..d).collect() }
    }

    pub fn is_identity(&self) -> bool {
        self.attributes.iter().enumerate().all(|(k, &v)| k == v)
            && self.classes.iter().enumerate().all(|(k, &v)| k == v)
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

fn sort_columns(columns: &[Vec<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..columns.len()).collect();
    order.sort_by(|&a, &b| lex_cmp(&columns[a], &columns[b]));
    order
}

/// Attribute key of one parameter set: column `j` of `(1 G) ∘ B`, using the
/// first level of categorical entries.
fn loading_effects(params: &Params) -> DMatrix<f64> {
    let (p, q) = params.g.shape();
    DMatrix::from_fn(p, q, |i, j| params.g[(i, j)] as f64 * params.beta[i][0][1 + j])
}

/// Canonical permutations for a set of parameter draws: attributes sorted by
/// the lexicographic order of the mean `(1 G) ∘ B` columns, then classes by
/// the mean `A` columns after the attribute permutation.
pub fn relabeling_for(draws: &[Params]) -> Result<Relabeling> {
    let first = draws.first().ok_or_else(|| Error::Empty("posterior archive".into()))?;
    let (q, d) = first.alpha.shape();
    let p = first.g.nrows();
    let mut effects = DMatrix::zeros(p, q);
    let mut alpha = DMatrix::zeros(q, d);
    for params in draws {
        effects += loading_effects(params);
        alpha += &params.alpha;
    }
    effects /= draws.len() as f64;
    alpha /= draws.len() as f64;

    let attr_cols: Vec<Vec<f64>> = (0..q).map(|j| effects.column(j).iter().copied().collect()).collect();
    let attributes = sort_columns(&attr_cols);
    let class_cols: Vec<Vec<f64>> = (0..d).map(|h| attributes.iter().map(|&j| alpha[(j, h)]).collect()).collect();
    let classes = sort_columns(&class_cols);
    Ok(Relabeling { attributes, classes })
}

/// Applies attribute and class permutations to one parameter set and re-pins
/// the baseline row of `Γ`.
pub fn permute_params(params: &Params, perm: &Relabeling) -> Params {
    let (q, d) = params.alpha.shape();
    let a = &perm.attributes;
    let c = &perm.classes;
    let alpha = DMatrix::from_fn(q, d, |j, h| params.alpha[(a[j], c[h])]);
    let g = DMatrix::from_fn(params.g.nrows(), q, |i, j| params.g[(i, a[j])]);
    let theta = DMatrix::from_fn(q, params.theta.ncols(), |j, k| params.theta[(a[j], k)]);
    let beta = params
        .beta
        .iter()
        .map(|levels| {
            levels
                .iter()
                .map(|row| {
                    let mut out = row.clone();
                    for j in 0..q {
                        out[1 + j] = row[1 + a[j]];
                    }
                    out
                })
                .collect()
        })
        .collect();
    let mut gamma = DMatrix::from_fn(d, params.gamma.ncols(), |h, k| params.gamma[(c[h], k)]);
    let base = gamma.row(d - 1).into_owned();
    for h in 0..d {
        let r = gamma.row(h) - &base;
        gamma.set_row(h, &r);
    }
    Params { alpha, beta, gamma, g, theta }
}

/// Applies a relabeling to every retained draw, including `z` and `W`.
pub fn apply_relabeling(samples: &PosteriorSamples, perm: &Relabeling) -> PosteriorSamples {
    let mut out = samples.clone();
    let mut inverse = vec![0; perm.classes.len()];
    for (new, &old) in perm.classes.iter().enumerate() {
        inverse[old] = new;
    }
    out.params = samples.params.iter().map(|p| permute_params(p, perm)).collect();
    out.z = samples.z.iter().map(|z| z.iter().map(|&h| inverse[h]).collect()).collect();
    out.w =
        samples.w.iter().map(|w| DMatrix::from_fn(w.nrows(), w.ncols(), |n, j| w[(n, perm.attributes[j])])).collect();
    out.relabeled = true;
    out
}

/// Canonicalizes attribute and class labels across the archive.
pub fn relabel(samples: &PosteriorSamples) -> Result<(PosteriorSamples, Relabeling)> {
    let perm = relabeling_for(&samples.params)?;
    Ok((apply_relabeling(samples, &perm), perm))
}

/// Zeroes `g_{i,j}` wherever the effect magnitude is below `threshold`. For
/// categorical entries the entry is zeroed only if every free level is below it.
pub fn refine_params(params: &mut Params, config: &ModelConfig, threshold: f64) {
    for (i, kind) in config.entries.iter().enumerate() {
        let levels = match kind {
            EntryKind::Categorical(l) => *l as usize - 1,
            _ => 1,
        };
        for j in 0..config.q {
            if params.g[(i, j)] == 1 && params.beta[i][..levels].iter().all(|row| row[1 + j].abs() < threshold) {
                params.g[(i, j)] = 0;
            }
        }
    }
}

pub fn refine_g(samples: &PosteriorSamples, threshold: f64) -> Result<PosteriorSamples> {
    if !(threshold > 0.0) || threshold.is_nan() {
        return Err(Error::InvalidParameter(format!("refinement threshold must be positive, got {threshold}")));
    }
    let mut out = samples.clone();
    for params in &mut out.params {
        refine_params(params, &samples.config, threshold);
    }
    Ok(out)
}

/// Posterior mean and equal-tailed 95% interval of one scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn from_draws(draws: &mut [f64]) -> Self {
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        draws.sort_by(f64::total_cmp);
        Self { mean, lower: quantile_sorted(draws, 0.025), upper: quantile_sorted(draws, 0.975) }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub n_samples: usize,
    /// `q × d`.
    pub alpha: DMatrix<Interval>,
    /// `[i][level][k]`, `k = 0` the intercept.
    pub beta: Vec<Vec<Vec<Interval>>>,
    pub gamma: DMatrix<Interval>,
    pub theta: DMatrix<Interval>,
    pub g_mean: DMatrix<f64>,
    pub g_mode: DMatrix<u8>,
    /// `N × d` membership probabilities.
    pub class_probs: DMatrix<f64>,
    pub z_mode: Vec<usize>,
    pub w_mean: DMatrix<f64>,
    pub w_mode: DMatrix<u8>,
    pub warnings: Vec<String>,
}

fn interval_matrix(
    rows: usize,
    cols: usize,
    draws: &[Params],
    f: impl Fn(&Params, usize, usize) -> f64,
) -> DMatrix<Interval> {
    DMatrix::from_fn(rows, cols, |r, c| {
        let mut v: Vec<f64> = draws.iter().map(|p| f(p, r, c)).collect();
        Interval::from_draws(&mut v)
    })
}

/// Binary majority vote; an exact tie goes to 0.
fn majority(mean: &DMatrix<f64>) -> DMatrix<u8> {
    mean.map(|m| (m > 0.5) as u8)
}

pub fn summarize(samples: &PosteriorSamples) -> Result<Summary> {
    let draws = &samples.params;
    let first = draws.first().ok_or_else(|| Error::Empty("posterior archive".into()))?;
    let s = draws.len() as f64;
    let (q, d) = first.alpha.shape();
    let mut warnings = Vec::new();
    if !samples.relabeled {
        warnings.push("archive has not been relabeled; summaries may mix label permutations".to_string());
    }

    let alpha = interval_matrix(q, d, draws, |p, j, h| p.alpha[(j, h)]);
    let gamma = interval_matrix(d, first.gamma.ncols(), draws, |p, h, k| p.gamma[(h, k)]);
    let theta = interval_matrix(q, first.theta.ncols(), draws, |p, j, k| p.theta[(j, k)]);
    let beta = first
        .beta
        .iter()
        .enumerate()
        .map(|(i, levels)| {
            (0..levels.len())
                .map(|l| {
                    (0..=q)
                        .map(|k| {
                            let mut v: Vec<f64> = draws.iter().map(|p| p.beta[i][l][k]).collect();
                            Interval::from_draws(&mut v)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let g_mean = draws.iter().fold(DMatrix::zeros(first.g.nrows(), q), |acc, p| acc + p.g.map(|v| v as f64)) / s;
    let g_mode = majority(&g_mean);

    let n = samples.z.first().map_or(0, |z| z.len());
    let mut class_probs = DMatrix::zeros(n, d);
    for z in &samples.z {
        for (obs, &h) in z.iter().enumerate() {
            class_probs[(obs, h)] += 1.0;
        }
    }
    let kept = samples.z.len().max(1) as f64;
    class_probs /= kept;
    let z_mode = (0..n)
        .map(|obs| {
            let mut best = 0;
            for h in 1..d {
                if class_probs[(obs, h)] > class_probs[(obs, best)] {
                    best = h;
                }
            }
            best
        })
        .collect();
    let w_mean = samples.w.iter().fold(DMatrix::zeros(n, q), |acc, w| acc + w.map(|v| v as f64)) / kept;
    let w_mode = majority(&w_mean);

    Ok(Summary {
        n_samples: draws.len(),
        alpha,
        beta,
        gamma,
        theta,
        g_mean,
        g_mode,
        class_probs,
        z_mode,
        w_mean,
        w_mode,
        warnings,
    })
}
