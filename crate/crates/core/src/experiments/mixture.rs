//! Beta-Bernoulli mixture marginals and the all-singletons versus
//! one-cluster comparison as the dimension grows.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::math::{ln_factorial, logsumexp};

/// A set partition of `0..n` in canonical form: blocks sorted by their
/// smallest member, members ascending.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    n: usize,
}

impl Partition {
    /// From a label per element; any label values are accepted.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut seen: Vec<(usize, usize)> = Vec::new();
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for (k, &l) in labels.iter().enumerate() {
            match seen.iter().find(|(lab, _)| *lab == l) {
                Some(&(_, b)) => blocks[b].push(k),
                None => {
                    seen.push((l, blocks.len()));
                    blocks.push(vec![k]);
                }
            }
        }
        Self { blocks, n: labels.len() }
    }

    pub fn from_blocks(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut labels = vec![usize::MAX; n];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidParameter("partition blocks must be nonempty".into()));
            }
            for &k in block {
                if k >= n || labels[k] != usize::MAX {
                    return Err(Error::InvalidParameter(format!("element {k} is out of range or repeated")));
                }
                labels[k] = b;
            }
        }
        if labels.contains(&usize::MAX) {
            return Err(Error::InvalidParameter("partition does not cover every element".into()));
        }
        Ok(Self::from_labels(&labels))
    }

    pub fn singletons(n: usize) -> Self {
        Self::from_labels(&(0..n).collect::<Vec<_>>())
    }

    pub fn single_block(n: usize) -> Self {
        Self::from_labels(&vec![0; n])
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// `log p(Y | partition)` with each block's Bernoulli rates integrated against
/// Uniform(0,1): `Σ_i Σ_h log[Γ(s+1) Γ(f+1) / Γ(n_h+2)]`.
pub fn mixture_log_marginal(y: &DMatrix<u8>, partition: &Partition) -> Result<f64> {
    if partition.len() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "partition covers {} elements but Y has {} rows",
            partition.len(),
            y.nrows()
        )));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::Data("mixture marginal requires binary Y".into()));
    }
    let mut total = 0.0;
    for i in 0..y.ncols() {
        for block in partition.blocks() {
            let s = block.iter().filter(|&&k| y[(k, i)] == 1).count() as u64;
            let f = block.len() as u64 - s;
            total += ln_factorial(s) + ln_factorial(f) - ln_factorial(block.len() as u64 + 1);
        }
    }
    Ok(total)
}

/// `log p(Y | all singletons) − log p(Y | one cluster)`.
pub fn singleton_log_ratio(y: &DMatrix<u8>) -> Result<f64> {
    let n = y.nrows();
    Ok(mixture_log_marginal(y, &Partition::singletons(n))? - mixture_log_marginal(y, &Partition::single_block(n))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurseRow {
    pub p: usize,
    pub log_ratio: f64,
}

/// Draws one `N × max(p)` matrix from the single-cluster truth with all rates
/// 1/2 and evaluates the log ratio on its leading `p` columns for every `p`.
pub fn mixture_curse_demo(n: usize, p_grid: &[usize], seed: u64) -> Result<Vec<CurseRow>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need N >= 2, got {n}")));
    }
    let p_max = p_grid.iter().copied().max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = DMatrix::from_fn(n, p_max, |_, _| rng.random_bool(0.5) as u8);
    p_grid
        .iter()
        .map(|&p| {
            let sub = y.columns(0, p).into_owned();
            Ok(CurseRow { p, log_ratio: singleton_log_ratio(&sub)? })
        })
        .collect()
}

/// Every set partition of `0..n` (restricted growth strings), `n ≤ 10`.
pub fn all_partitions(n: usize) -> Result<Vec<Partition>> {
    if n > 10 {
        return Err(Error::InvalidParameter(format!("exhaustive partitions limited to N <= 10, got {n}")));
    }
    let mut out = Vec::new();
    let mut labels = vec![0usize; n];
    fn rec(k: usize, max: usize, labels: &mut Vec<usize>, out: &mut Vec<Partition>) {
        if k == labels.len() {
            out.push(Partition::from_labels(labels));
            return;
        }
        for l in 0..=max + 1 {
            labels[k] = l;
            rec(k + 1, max.max(l), labels, out);
        }
    }
    if n == 0 {
        out.push(Partition::from_labels(&[]));
    } else {
        rec(1, 0, &mut labels, &mut out);
    }
    Ok(out)
}

/// Posterior over all partitions under a uniform partition prior (`N ≤ 8`).
pub fn partition_posterior(y: &DMatrix<u8>) -> Result<Vec<(Partition, f64)>> {
    if y.nrows() > 8 {
        return Err(Error::InvalidParameter("exhaustive partition posterior limited to N <= 8".into()));
    }
    let parts = all_partitions(y.nrows())?;
    let logs: Vec<f64> = parts.iter().map(|p| mixture_log_marginal(y, p)).collect::<Result<_>>()?;
    let lse = logsumexp(&logs);
    Ok(parts.into_iter().zip(logs).map(|(p, l)| (p, (l - lse).exp())).collect())
}
