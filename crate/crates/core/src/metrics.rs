//! Posterior-predictive means and prediction metrics for binary outcomes.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gibbs::conditionals::check_block_q;
use crate::gibbs::PosteriorSamples;
use crate::math::{logistic, softmax};
use crate::model::{class_logits, linear_predictor, log_prob_w_mask, row_mask, EntryKind, Mask, Params};

/// Predictive mean of one entry given the active-attribute mask: `P(y = 1)`
/// for binary entries, `E[y]` for count and categorical entries.
fn entry_mean(kind: EntryKind, coefs: &[nalgebra::DVector<f64>], active: Mask) -> f64 {
    match kind {
        EntryKind::Binary => logistic(linear_predictor(&coefs[0], active)),
        EntryKind::Count => linear_predictor(&coefs[0], active).exp(),
        EntryKind::Categorical(levels) => {
            let etas: Vec<f64> = (0..levels as usize).map(|l| linear_predictor(&coefs[l], active)).collect();
            softmax(&etas).iter().enumerate().map(|(l, p)| (l + 1) as f64 * p).sum()
        }
    }
}

/// In-sample predictive means, averaging over retained `(W, G, B)`.
pub fn posterior_predictive_in_sample(samples: &PosteriorSamples) -> Result<DMatrix<f64>> {
    if samples.is_empty() {
        return Err(Error::Empty("posterior archive".into()));
    }
    let config = &samples.config;
    let n = samples.w[0].nrows();
    let mut phat = DMatrix::zeros(n, config.p);
    for (params, w) in samples.params.iter().zip(&samples.w) {
        for obs in 0..n {
            let wm = row_mask(w, obs);
            for (i, kind) in config.entries.iter().enumerate() {
                phat[(obs, i)] += entry_mean(*kind, &params.beta[i], params.g_mask(i) & wm);
            }
        }
    }
    Ok(phat / samples.len() as f64)
}

/// Predictive mean for one covariate vector under one parameter draw,
/// marginalizing `z | x` and `w | z`.
pub fn predictive_given_params(params: &Params, entries: &[EntryKind], x: &[f64]) -> Vec<f64> {
    let (q, d) = params.alpha.shape();
    let class_p = softmax(&class_logits(x, &params.gamma));
    let mut out = vec![0.0; entries.len()];
    for m in 0..1u64 << q {
        let pw: f64 = (0..d).map(|h| class_p[h] * log_prob_w_mask(m, h, &params.alpha).exp()).sum();
        if pw == 0.0 {
            continue;
        }
        for (i, kind) in entries.iter().enumerate() {
            out[i] += pw * entry_mean(*kind, &params.beta[i], params.g_mask(i) & m);
        }
    }
    out
}

/// Out-of-sample predictive means for the rows of `x`.
pub fn posterior_predictive_new(samples: &PosteriorSamples, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if samples.is_empty() {
        return Err(Error::Empty("posterior archive".into()));
    }
    let config = &samples.config;
    check_block_q(config.q)?;
    if x.ncols() != config.px {
        return Err(Error::DimensionMismatch(format!(
            "new covariates have {} columns, model expects {}",
            x.ncols(),
            config.px
        )));
    }
    let rows: Vec<Vec<f64>> = (0..x.nrows())
        .into_par_iter()
        .map(|r| {
            let xr: Vec<f64> = x.row(r).iter().copied().collect();
            let mut acc = vec![0.0; config.p];
            for params in &samples.params {
                for (a, v) in acc.iter_mut().zip(predictive_given_params(params, &config.entries, &xr)) {
                    *a += v;
                }
            }
            acc.iter().map(|v| v / samples.len() as f64).collect()
        })
        .collect();
    Ok(DMatrix::from_fn(x.nrows(), config.p, |r, i| rows[r][i]))
}

fn check_shapes(phat: &DMatrix<f64>, y: &DMatrix<u32>) -> Result<()> {
    if phat.shape() != y.shape() {
        return Err(Error::DimensionMismatch(format!(
            "predictions are {:?} but outcomes are {:?}",
            phat.shape(),
            y.shape()
        )));
    }
    Ok(())
}

pub fn rmse(phat: &DMatrix<f64>, y: &DMatrix<u32>) -> Result<f64> {
    check_shapes(phat, y)?;
    if phat.is_empty() {
        return Err(Error::Empty("prediction set".into()));
    }
    let sse: f64 = phat.iter().zip(y.iter()).map(|(p, &t)| (p - t as f64).powi(2)).sum();
    Ok((sse / phat.len() as f64).sqrt())
}

/// Mann-Whitney AUC: the fraction of (positive, negative) pairs ranked
/// correctly, ties counted one half. `None` when either class is absent.
pub fn auc_scores(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks over tie groups
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < order.len() {
        let mut end = k + 1;
        while end < order.len() && scores[order[end]] == scores[order[k]] {
            end += 1;
        }
        let mid = (k + end + 1) as f64 / 2.0;
        rank_sum += order[k..end].iter().filter(|&&o| labels[o]).count() as f64 * mid;
        k = end;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Some(u / (pos as f64 * neg as f64))
}

/// AUC pooled over every entry of the matrices.
pub fn auc(phat: &DMatrix<f64>, y: &DMatrix<u32>) -> Result<Option<f64>> {
    check_shapes(phat, y)?;
    let labels: Vec<bool> = y.iter().map(|&v| v == 1).collect();
    Ok(auc_scores(phat.as_slice(), &labels))
}

/// AUC computed separately for each column.
pub fn auc_per_column(phat: &DMatrix<f64>, y: &DMatrix<u32>) -> Result<Vec<Option<f64>>> {
    check_shapes(phat, y)?;
    Ok((0..phat.ncols())
        .map(|i| {
            let labels: Vec<bool> = y.column(i).iter().map(|&v| v == 1).collect();
            let scores: Vec<f64> = phat.column(i).iter().copied().collect();
            auc_scores(&scores, &labels)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    /// `2TP / (2TP + FP + FN)`, `None` on a zero denominator.
    pub fn f1(&self) -> Option<f64> {
        let den = 2 * self.tp + self.fp + self.fn_;
        (den > 0).then(|| 2.0 * self.tp as f64 / den as f64)
    }
}

/// F1 on the positive class of paired binary predictions and truths.
pub fn cooccurrence_score(pred: &[bool], truth: &[bool]) -> Result<Option<f64>> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch("prediction and truth pairs differ in length".into()));
    }
    let mut c = Confusion::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            _ => {}
        }
    }
    Ok(c.f1())
}

/// Co-occurrence confusion counts over all observations and unordered column
/// pairs: predicted when `phat_i · phat_i' ≥ threshold`, true when both are 1.
pub fn cooccurrence_confusion(phat: &DMatrix<f64>, y: &DMatrix<u32>, threshold: f64) -> Result<Confusion> {
    check_shapes(phat, y)?;
    let p = phat.ncols();
    let per_row: Vec<Confusion> = (0..phat.nrows())
        .into_par_iter()
        .map(|n| {
            let mut c = Confusion::default();
            for i in 0..p {
                for k in i + 1..p {
                    let pred = phat[(n, i)] * phat[(n, k)] >= threshold;
                    let truth = y[(n, i)] == 1 && y[(n, k)] == 1;
                    match (pred, truth) {
                        (true, true) => c.tp += 1,
                        (true, false) => c.fp += 1,
                        (false, true) => c.fn_ += 1,
                        _ => {}
                    }
                }
            }
            c
        })
        .collect();
    Ok(per_row.into_iter().fold(Confusion::default(), |a, b| Confusion {
        tp: a.tp + b.tp,
        fp: a.fp + b.fp,
        fn_: a.fn_ + b.fn_,
    }))
}

pub fn cooccurrence_from_phat(phat: &DMatrix<f64>, y: &DMatrix<u32>, threshold: f64) -> Result<Option<f64>> {
    Ok(cooccurrence_confusion(phat, y, threshold)?.f1())
}
