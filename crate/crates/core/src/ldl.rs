//! Sparse LDLᵀ factorization of symmetric positive definite matrices.
//!
//! The elimination order is exact minimum degree, computed on an explicit
//! elimination graph. The neighbor set of a node at the time it is eliminated
//! is exactly the row pattern of its column of `L`, so the ordering pass also
//! yields the symbolic factorization. Ties are broken by the smaller index,
//! which makes the factorization deterministic.
//!
//! On metric-graph stiffness matrices the edge-interior chains are eliminated
//! first without fill, leaving a vertex-level graph.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use thiserror::Error;

use crate::sparse::CsrMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not positive definite: pivot {pivot} = {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },
}

#[derive(Debug, Clone)]
pub struct SparseLdl {
    n: usize,
    /// `perm[k]` is the original index eliminated at step `k`.
    perm: Vec<usize>,
    col_ptr: Vec<usize>,
    /// Row indices (in elimination order) of the strictly lower part of `L`.
    row_idx: Vec<usize>,
    l_vals: Vec<f64>,
    d: Vec<f64>,
}

impl SparseLdl {
    /// Factors a symmetric matrix. Only entries below the diagonal in the
    /// elimination order are read, so an unsymmetric input is silently
    /// treated as its lower triangle.
    pub fn factor(a: &CsrMatrix) -> Result<Self, FactorError> {
        if a.nrows() != a.ncols() {
            return Err(FactorError::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        let n = a.nrows();
        let (perm, structure) = minimum_degree(a);
        let mut iperm = vec![0usize; n];
        for (k, &old) in perm.iter().enumerate() {
            iperm[old] = k;
        }

        let mut col_ptr = Vec::with_capacity(n + 1);
        col_ptr.push(0);
        let mut row_idx = Vec::new();
        for s in &structure {
            let start = row_idx.len();
            row_idx.extend(s.iter().map(|&old| iperm[old]));
            row_idx[start..].sort_unstable();
            col_ptr.push(row_idx.len());
        }
        let mut vals = vec![0.0; row_idx.len()];
        let mut d = vec![0.0; n];
        for i in 0..n {
            let ni = iperm[i];
            let (cols, values) = a.row(i);
            for (&j, &v) in cols.iter().zip(values) {
                let nj = iperm[j];
                if ni == nj {
                    d[ni] += v;
                } else if ni > nj {
                    let rows = &row_idx[col_ptr[nj]..col_ptr[nj + 1]];
                    let p = rows
                        .binary_search(&ni)
                        .expect("matrix entry outside symbolic pattern");
                    vals[col_ptr[nj] + p] += v;
                }
            }
        }

        let mut rows_k: Vec<usize> = Vec::new();
        let mut vals_k: Vec<f64> = Vec::new();
        for k in 0..n {
            let dk = d[k];
            if !(dk > 0.0 && dk.is_finite()) {
                return Err(FactorError::NotPositiveDefinite {
                    pivot: perm[k],
                    value: dk,
                });
            }
            let (lo, hi) = (col_ptr[k], col_ptr[k + 1]);
            rows_k.clear();
            rows_k.extend_from_slice(&row_idx[lo..hi]);
            vals_k.clear();
            vals_k.extend_from_slice(&vals[lo..hi]);
            for p in 0..rows_k.len() {
                let i = rows_k[p];
                let a_ik = vals_k[p];
                d[i] -= a_ik * a_ik / dk;
                for q in 0..p {
                    let j = rows_k[q];
                    let cj = &row_idx[col_ptr[j]..col_ptr[j + 1]];
                    let pos = cj.binary_search(&i).expect("fill outside symbolic pattern");
                    vals[col_ptr[j] + pos] -= a_ik * vals_k[q] / dk;
                }
            }
            for v in &mut vals[lo..hi] {
                *v /= dk;
            }
        }
        Ok(Self {
            n,
            perm,
            col_ptr,
            row_idx,
            l_vals: vals,
            d,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored off-diagonal entries of `L`.
    pub fn nnz_l(&self) -> usize {
        self.row_idx.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        let mut work = vec![0.0; self.n];
        self.solve_in_place(&mut x, &mut work);
        x
    }

    /// Overwrites `x` with `A⁻¹ x`; `work` must have length `dim()`.
    pub fn solve_in_place(&self, x: &mut [f64], work: &mut [f64]) {
        assert_eq!(x.len(), self.n, "right-hand side has wrong length");
        assert_eq!(work.len(), self.n);
        for (k, &old) in self.perm.iter().enumerate() {
            work[k] = x[old];
        }
        for k in 0..self.n {
            let wk = work[k];
            if wk != 0.0 {
                for p in self.col_ptr[k]..self.col_ptr[k + 1] {
                    work[self.row_idx[p]] -= self.l_vals[p] * wk;
                }
            }
        }
        for (w, d) in work.iter_mut().zip(&self.d) {
            *w /= d;
        }
        for k in (0..self.n).rev() {
            let mut s = work[k];
            for p in self.col_ptr[k]..self.col_ptr[k + 1] {
                s -= self.l_vals[p] * work[self.row_idx[p]];
            }
            work[k] = s;
        }
        for (k, &old) in self.perm.iter().enumerate() {
            x[old] = work[k];
        }
    }
}

/// Returns the elimination order and, for each step, the neighbor set (in
/// original indices) of the eliminated node.
fn minimum_degree(a: &CsrMatrix) -> (Vec<usize>, Vec<Vec<usize>>) {
    let n = a.nrows();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for i in 0..n {
        for &j in a.row(i).0 {
            if i != j {
                adj[i].insert(j);
                adj[j].insert(i);
            }
        }
    }
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        (0..n).map(|v| Reverse((adj[v].len(), v))).collect();
    let mut eliminated = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut structure = Vec::with_capacity(n);
    while let Some(Reverse((deg, v))) = heap.pop() {
        if eliminated[v] || deg != adj[v].len() {
            continue;
        }
        eliminated[v] = true;
        let nbrs: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
        for &u in &nbrs {
            adj[u].remove(&v);
        }
        for (p, &u) in nbrs.iter().enumerate() {
            for &w in &nbrs[p + 1..] {
                adj[u].insert(w);
                adj[w].insert(u);
            }
        }
        for &u in &nbrs {
            heap.push(Reverse((adj[u].len(), u)));
        }
        order.push(v);
        structure.push(nbrs);
    }
    (order, structure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::DenseMatrix;
    use proptest::prelude::*;

    #[test]
    fn two_by_two() {
        let a = CsrMatrix::from_dense(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let x = SparseLdl::factor(&a).unwrap().solve(&[1.0, 0.0]);
        assert!((x[0] - 3.0 / 11.0).abs() < 1e-15);
        assert!((x[1] + 1.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(
            SparseLdl::factor(&a),
            Err(FactorError::NotPositiveDefinite { .. })
        ));
        let rect = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1.0)]);
        assert!(matches!(
            SparseLdl::factor(&rect),
            Err(FactorError::NotSquare { .. })
        ));
    }

    #[test]
    fn chain_has_no_fill() {
        // tridiagonal: minimum degree eliminates from the ends, no fill
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.5));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        let f = SparseLdl::factor(&a).unwrap();
        assert_eq!(f.nnz_l(), n - 1);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = f.solve(&b);
        let r = a.mul_vec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-13);
        }
    }

    fn random_spd(n: usize, density_seed: &[u8]) -> CsrMatrix {
        // diagonally dominant with a pseudo-random symmetric pattern
        let mut t = Vec::new();
        let mut rowsum = vec![0.0; n];
        let mut s = 0usize;
        for i in 0..n {
            for j in 0..i {
                s = s
                    .wrapping_mul(31)
                    .wrapping_add(density_seed[(i * 7 + j) % density_seed.len()] as usize);
                if s.is_multiple_of(5) {
                    let v = -((s % 13) as f64 + 1.0) / 7.0;
                    t.push((i, j, v));
                    t.push((j, i, v));
                    rowsum[i] += v.abs();
                    rowsum[j] += v.abs();
                }
            }
        }
        for (i, r) in rowsum.iter().enumerate() {
            t.push((i, i, r + 0.5));
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    proptest! {
        #[test]
        fn matches_dense_solve(n in 1usize..30, seed in prop::collection::vec(any::<u8>(), 1..16)) {
            let a = random_spd(n, &seed);
            let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
            let x = SparseLdl::factor(&a).unwrap().solve(&b);
            let y = DenseMatrix::from_rows(&(0..n).map(|i| a.to_dense().row(i).to_vec()).collect::<Vec<_>>())
                .solve(&b)
                .unwrap();
            for (xi, yi) in x.iter().zip(&y) {
                prop_assert!((xi - yi).abs() <= 1e-12 * (1.0 + yi.abs()));
            }
        }
    }
}
