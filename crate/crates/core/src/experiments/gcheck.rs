//! Static identifiability conditions on the loading matrix `G`.
//!
//! * Strict: the rows contain three disjoint copies of `I_q`, i.e. every basis
//!   vector `e_j` appears as a row at least three times.
//! * Generic: columns are distinct; two disjoint sets of `q` rows each have an
//!   all-one diagonal under some ordering; and the remaining rows leave no
//!   column all-zero.

use nalgebra::DMatrix;
use serde::Serialize;

/// Rows forming each identity block: `blocks[k][j]` is the row used for `e_j`
/// in block `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockWitness {
    pub blocks: Vec<Vec<usize>>,
}

fn is_basis_row(g: &DMatrix<u8>, i: usize) -> Option<usize> {
    let ones: Vec<usize> = (0..g.ncols()).filter(|&j| g[(i, j)] == 1).collect();
    (ones.len() == 1).then(|| ones[0])
}

/// Three disjoint identity blocks, if present.
pub fn check_g_strict(g: &DMatrix<u8>) -> Option<BlockWitness> {
    let (p, q) = g.shape();
    if q == 0 || p < 3 * q {
        return None;
    }
    let mut rows_for: Vec<Vec<usize>> = vec![Vec::new(); q];
    for i in 0..p {
        if let Some(j) = is_basis_row(g, i) {
            rows_for[j].push(i);
        }
    }
    if rows_for.iter().any(|r| r.len() < 3) {
        return None;
    }
    Some(BlockWitness { blocks: (0..3).map(|k| (0..q).map(|j| rows_for[j][k]).collect()).collect() })
}

pub fn columns_distinct(g: &DMatrix<u8>) -> bool {
    let q = g.ncols();
    (0..q).all(|a| (a + 1..q).all(|b| g.column(a) != g.column(b)))
}

struct Search<'a> {
    g: &'a DMatrix<u8>,
    q: usize,
    used: Vec<bool>,
    /// Unused rows with a one in each column.
    free_ones: Vec<usize>,
    slots: Vec<usize>,
}

impl Search<'_> {
    fn take(&mut self, i: usize) {
        self.used[i] = true;
        for j in 0..self.q {
            if self.g[(i, j)] == 1 {
                self.free_ones[j] -= 1;
            }
        }
    }

    fn release(&mut self, i: usize) {
        self.used[i] = false;
        for j in 0..self.q {
            if self.g[(i, j)] == 1 {
                self.free_ones[j] += 1;
            }
        }
    }

    /// Fills slot `k` (block `k / q`, attribute `k % q`).
    fn fill(&mut self, k: usize) -> bool {
        if k == 2 * self.q {
            return true;
        }
        let j = k % self.q;
        let mut candidates: Vec<usize> =
            (0..self.g.nrows()).filter(|&i| !self.used[i] && self.g[(i, j)] == 1).collect();
        // rows with fewer ones cost the remainder less coverage
        candidates.sort_by_key(|&i| (self.g.row(i).iter().filter(|&&v| v == 1).count(), i));
        for i in candidates {
            self.take(i);
            // every column still needs a one outside the diagonal rows
            if self.free_ones.iter().all(|&c| c > 0) {
                self.slots.push(i);
                if self.fill(k + 1) {
                    return true;
                }
                self.slots.pop();
            }
            self.release(i);
        }
        false
    }
}

/// The generic condition; returns the two diagonal blocks when it holds.
pub fn check_g_generic(g: &DMatrix<u8>) -> Option<BlockWitness> {
    let (p, q) = g.shape();
    if q == 0 || p < 2 * q + 1 || !columns_distinct(g) {
        return None;
    }
    let free_ones = (0..q).map(|j| g.column(j).iter().filter(|&&v| v == 1).count()).collect();
    let mut search = Search { g, q, used: vec![false; p], free_ones, slots: Vec::with_capacity(2 * q) };
    if !search.free_ones.iter().all(|&c| c > 0) || !search.fill(0) {
        return None;
    }
    Some(BlockWitness { blocks: vec![search.slots[..q].to_vec(), search.slots[q..].to_vec()] })
}
