//! Coreset-plus-subsample surrogate for the outcome likelihood.
//!
//! The full log-likelihood `Σ_i ℓ_i` over the `p` outcome dimensions is
//! replaced by `Σ_{i∈S} ℓ_i + ((p − |S|)/|B|) Σ_{i∈B} ℓ_i`, where `S` is a fixed
//! coreset and `B` a uniform subsample of the remaining dimensions redrawn
//! every sweep.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::conditionals::LikTable;
use crate::model::{row_mask, Dataset, Mask, ModelConfig, Params};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    /// Coreset `S`, always included with weight one.
    pub coreset: Vec<usize>,
    /// Size of the uniform subsample `B` drawn from `[p] ∖ S`.
    pub subsample_size: usize,
}

impl SurrogateConfig {
    pub fn validate(&self, p: usize) -> Result<()> {
        let mut seen = vec![false; p];
        for &i in &self.coreset {
            if i >= p {
                return Err(Error::Config(format!("coreset index {i} out of range for p={p}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Config(format!("coreset index {i} repeated")));
            }
        }
        let rest = p - self.coreset.len();
        if rest > 0 && self.subsample_size == 0 {
            return Err(Error::Config("subsample must be nonempty when the coreset does not cover [p]".into()));
        }
        if self.subsample_size > rest {
            return Err(Error::Config(format!(
                "subsample size {} exceeds the {rest} dimensions outside the coreset",
                self.subsample_size
            )));
        }
        Ok(())
    }

    /// Per-dimension weights for one sweep: 1 on `S`, `(p−|S|)/|B|` on a fresh
    /// subsample, 0 elsewhere.
    pub fn draw_weights<R: Rng + ?Sized>(&self, p: usize, rng: &mut R) -> Vec<f64> {
        let mut weights = vec![0.0; p];
        for &i in &self.coreset {
            weights[i] = 1.0;
        }
        let rest: Vec<usize> = (0..p).filter(|i| weights[*i] == 0.0).collect();
        if !rest.is_empty() {
            let scale = rest.len() as f64 / self.subsample_size as f64;
            for k in rand::seq::index::sample(rng, rest.len(), self.subsample_size) {
                weights[rest[k]] = scale;
            }
        }
        weights
    }
}

/// Weights for explicit index sets `S` and `B`.
pub fn surrogate_weights(p: usize, coreset: &[usize], subsample: &[usize]) -> Result<Vec<f64>> {
    let mut weights = vec![0.0; p];
    for &i in coreset {
        if i >= p {
            return Err(Error::Config(format!("coreset index {i} out of range")));
        }
        weights[i] = 1.0;
    }
    let rest = p - coreset.len();
    if rest > 0 && subsample.is_empty() {
        return Err(Error::Config("empty subsample with a partial coreset".into()));
    }
    for &i in subsample {
        if i >= p {
            return Err(Error::Config(format!("subsample index {i} out of range")));
        }
        if weights[i] != 0.0 {
            return Err(Error::Config(format!("index {i} is in both the coreset and the subsample")));
        }
        weights[i] = rest as f64 / subsample.len() as f64;
    }
    Ok(weights)
}

/// Surrogate log-likelihood of all observations given `W`, `G`, `B`.
pub fn surrogate_loglik(
    config: &ModelConfig,
    data: &Dataset,
    w: &DMatrix<u8>,
    params: &Params,
    coreset: &[usize],
    subsample: &[usize],
) -> Result<f64> {
    if w.nrows() != data.n() || w.ncols() != config.q {
        return Err(Error::DimensionMismatch("W does not match the data".into()));
    }
    let weights = surrogate_weights(config.p, coreset, subsample)?;
    let table = LikTable::new(config, params);
    let g_masks: Vec<Mask> = (0..config.p).map(|i| params.g_mask(i)).collect();
    Ok((0..data.n())
        .map(|n| table.row_loglik(data.y.row(n).iter().copied(), row_mask(w, n), &g_masks, Some(&weights)))
        .sum())
}
