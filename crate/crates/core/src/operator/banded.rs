//! Banded LU with partial pivoting for the periodic stencils.
//!
//! Periodic wrap-around couples the first and last nodes of each axis. The
//! interleaved ordering `0, n-1, 1, n-2, ...` places every pair of periodic
//! neighbours at most two positions apart, so a 1D stencil has bandwidth 2
//! and a 2D stencil bandwidth about `2 n_x + 2`.

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

/// Position of node `i` in the interleaved ordering of `0..n`.
pub fn interleaved_position(i: usize, n: usize) -> usize {
    if 2 * i < n {
        2 * i
    } else {
        2 * (n - 1 - i) + 1
    }
}

/// Node permutation for a grid with `n` points per axis (x fastest).
pub fn interleaved_permutation(n: &[usize]) -> Vec<usize> {
    match n.len() {
        1 => (0..n[0]).map(|i| interleaved_position(i, n[0])).collect(),
        _ => {
            let (nx, ny) = (n[0], n[1]);
            let mut perm = vec![0; nx * ny];
            for j in 0..ny {
                let pj = interleaved_position(j, ny);
                for i in 0..nx {
                    perm[i + nx * j] = interleaved_position(i, nx) + nx * pj;
                }
            }
            perm
        }
    }
}

/// LU factors of `P A Pᵀ` where `P` is a node permutation.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
    perm: Vec<usize>,
}

impl BandLu {
    /// Factor `a` after reordering its unknowns by `perm` (`perm[old] = new`).
    pub fn factor(a: &CsrMatrix, perm: &[usize]) -> Result<Self> {
        let n = a.rows();
        let (mut kl, mut ku) = (0usize, 0usize);
        for r in 0..n {
            for (c, _) in a.row(r) {
                let (pr, pc) = (perm[r], perm[c]);
                if pc < pr {
                    kl = kl.max(pr - pc);
                } else {
                    ku = ku.max(pc - pr);
                }
            }
        }
        let width = 2 * kl + ku + 1;
        let mut lu = BandLu {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
            pivots: vec![0; n],
            perm: perm.to_vec(),
        };
        for r in 0..n {
            for (c, v) in a.row(r) {
                let slot = lu.slot(perm[r], perm[c]);
                lu.data[slot] += v;
            }
        }
        lu.eliminate()?;
        Ok(lu)
    }

    /// Bytes needed to store the factors of an `n`-unknown system with the
    /// given bandwidths.
    pub fn storage_bytes(n: usize, kl: usize, ku: usize) -> usize {
        n * (2 * kl + ku + 1) * std::mem::size_of::<f64>()
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    fn eliminate(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.slot(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.data[self.slot(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular { column: k });
            }
            self.pivots[k] = p;
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.slot(k, j), self.slot(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.slot(k, k)];
            for i in k + 1..=last_row {
                let sik = self.slot(i, k);
                let l = self.data[sik] / pivot;
                self.data[sik] = l;
                if l == 0.0 {
                    continue;
                }
                let base_k = self.slot(k, k);
                let base_i = self.slot(i, k);
                for off in 1..=last_col - k {
                    self.data[base_i + off] -= l * self.data[base_k + off];
                }
            }
        }
        Ok(())
    }

    /// Solve `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut y = vec![0.0; n];
        for (old, &new) in self.perm.iter().enumerate() {
            y[new] = b[old];
        }
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                y.swap(k, p);
            }
            let yk = y[k];
            if yk != 0.0 {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    y[i] -= self.data[self.slot(i, k)] * yk;
                }
            }
        }
        for k in (0..n).rev() {
            let base = self.slot(k, k);
            let mut s = y[k];
            for off in 1..=((k + self.kl + self.ku).min(n - 1) - k) {
                s -= self.data[base + off] * y[k + off];
            }
            y[k] = s / self.data[base];
        }
        for (old, &new) in self.perm.iter().enumerate() {
            b[old] = y[new];
        }
    }
}
