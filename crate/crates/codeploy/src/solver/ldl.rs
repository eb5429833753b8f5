//! Sparse symmetric LDLᵀ with a minimum-degree ordering.
//!
//! The pattern is analysed once; each numeric factorization reuses it.
//! Pivots are pushed away from zero toward an expected sign, which keeps
//! quasidefinite systems factorizable under any ordering.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

pub(crate) struct SymbolicLdl {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// `iperm[old] = new`.
    iperm: Vec<usize>,
    /// Strictly lower pattern of L by column, permuted indices.
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// Row view of L: for row j, the (column, position) pairs.
    row_ptr: Vec<usize>,
    row_entry: Vec<(usize, usize)>,
}

impl SymbolicLdl {
    /// Analyses the pattern given by off-diagonal `edges` in original indices.
    pub(crate) fn analyse(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }

        let mut eliminated = vec![false; n];
        let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
            (0..n).map(|v| Reverse((adj[v].len(), v))).collect();
        let mut perm = Vec::with_capacity(n);
        let mut patterns: Vec<Vec<usize>> = Vec::with_capacity(n);
        let mut merged = Vec::new();
        while let Some(Reverse((deg, v))) = heap.pop() {
            if eliminated[v] || deg != adj[v].len() {
                continue;
            }
            eliminated[v] = true;
            let nbrs = std::mem::take(&mut adj[v]);
            for &u in &nbrs {
                merged.clear();
                let (a, b) = (&adj[u], &nbrs);
                let (mut p, mut q) = (0, 0);
                while p < a.len() || q < b.len() {
                    let next = match (a.get(p), b.get(q)) {
                        (Some(&x), Some(&y)) if x == y => {
                            p += 1;
                            q += 1;
                            x
                        }
                        (Some(&x), Some(&y)) if x < y => {
                            p += 1;
                            x
                        }
                        (Some(_), Some(&y)) => {
                            q += 1;
                            y
                        }
                        (Some(&x), None) => {
                            p += 1;
                            x
                        }
                        (None, Some(&y)) => {
                            q += 1;
                            y
                        }
                        (None, None) => unreachable!(),
                    };
                    if next != u && next != v {
                        merged.push(next);
                    }
                }
                std::mem::swap(&mut adj[u], &mut merged);
                heap.push(Reverse((adj[u].len(), u)));
            }
            perm.push(v);
            patterns.push(nbrs);
        }

        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for pat in &patterns {
            let start = row_idx.len();
            row_idx.extend(pat.iter().map(|&o| iperm[o]));
            row_idx[start..].sort_unstable();
            col_ptr.push(row_idx.len());
        }

        let mut counts = vec![0usize; n];
        for &r in &row_idx {
            counts[r] += 1;
        }
        let mut row_ptr = vec![0; n + 1];
        for j in 0..n {
            row_ptr[j + 1] = row_ptr[j] + counts[j];
        }
        let mut fill = row_ptr.clone();
        let mut row_entry = vec![(0, 0); row_idx.len()];
        for k in 0..n {
            for p in col_ptr[k]..col_ptr[k + 1] {
                let r = row_idx[p];
                row_entry[fill[r]] = (k, p);
                fill[r] += 1;
            }
        }

        SymbolicLdl {
            n,
            perm,
            iperm,
            col_ptr,
            row_idx,
            row_ptr,
            row_entry,
        }
    }

    /// Length of the value array addressed by [`slot`](Self::slot).
    pub(crate) fn value_len(&self) -> usize {
        self.row_idx.len() + self.n
    }

    /// Storage slot of matrix entry (a, b) in original indices.
    pub(crate) fn slot(&self, a: usize, b: usize) -> usize {
        let (pa, pb) = (self.iperm[a], self.iperm[b]);
        if pa == pb {
            return self.row_idx.len() + pa;
        }
        let (col, row) = if pa < pb { (pa, pb) } else { (pb, pa) };
        let range = self.col_ptr[col]..self.col_ptr[col + 1];
        let off = self.row_idx[range.clone()]
            .binary_search(&row)
            .expect("entry outside analysed pattern");
        range.start + off
    }

    /// Factorizes the matrix whose entries sit at their slots in `values`.
    /// `sign[old]` is the expected pivot sign.
    pub(crate) fn factor(&self, values: &[f64], sign: &[f64], floor: f64) -> NumericLdl {
        let n = self.n;
        let nnz = self.row_idx.len();
        let mut l = vec![0.0; nnz];
        let mut d = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut perturbed = 0;
        for j in 0..n {
            w[j] = values[nnz + j];
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                w[self.row_idx[p]] = values[p];
            }
            for &(k, p) in &self.row_entry[self.row_ptr[j]..self.row_ptr[j + 1]] {
                let ljk_dk = l[p] * d[k];
                w[j] -= ljk_dk * l[p];
                for q in p + 1..self.col_ptr[k + 1] {
                    w[self.row_idx[q]] -= ljk_dk * l[q];
                }
            }
            let s = sign[self.perm[j]];
            let mut dj = w[j];
            if s * dj < floor {
                dj = s * floor.max(dj.abs());
                perturbed += 1;
            }
            d[j] = dj;
            w[j] = 0.0;
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let r = self.row_idx[p];
                l[p] = w[r] / dj;
                w[r] = 0.0;
            }
        }
        NumericLdl { l, d, perturbed }
    }

    /// Solves `A x = b` in original indices.
    pub(crate) fn solve(&self, f: &NumericLdl, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = (0..n).map(|k| b[self.perm[k]]).collect();
        for k in 0..n {
            let yk = y[k];
            if yk != 0.0 {
                for p in self.col_ptr[k]..self.col_ptr[k + 1] {
                    y[self.row_idx[p]] -= f.l[p] * yk;
                }
            }
        }
        for k in 0..n {
            y[k] /= f.d[k];
        }
        for k in (0..n).rev() {
            let mut acc = y[k];
            for p in self.col_ptr[k]..self.col_ptr[k + 1] {
                acc -= f.l[p] * y[self.row_idx[p]];
            }
            y[k] = acc;
        }
        let mut x = vec![0.0; n];
        for k in 0..n {
            x[self.perm[k]] = y[k];
        }
        x
    }

    #[cfg(test)]
    fn fill(&self) -> usize {
        self.row_idx.len()
    }
}

pub(crate) struct NumericLdl {
    l: Vec<f64>,
    d: Vec<f64>,
    #[cfg_attr(not(test), allow(dead_code))]
    pub(crate) perturbed: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_mul(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|r| r.iter().zip(x).map(|(u, v)| u * v).sum())
            .collect()
    }

    fn factor_dense(a: &[Vec<f64>], sign: &[f64]) -> (SymbolicLdl, NumericLdl) {
        let n = a.len();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..i {
                if a[i][j] != 0.0 {
                    edges.push((i, j));
                }
            }
        }
        let sym = SymbolicLdl::analyse(n, &edges);
        let mut vals = vec![0.0; sym.value_len()];
        for i in 0..n {
            for j in 0..=i {
                if a[i][j] != 0.0 || i == j {
                    vals[sym.slot(i, j)] = a[i][j];
                }
            }
        }
        let num = sym.factor(&vals, sign, 1e-300);
        (sym, num)
    }

    #[test]
    fn solves_spd_arrow_matrix() {
        // arrow: dense last row/column, diagonal elsewhere
        let n = 6;
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = 4.0 + i as f64;
            a[i][n - 1] = 1.0;
            a[n - 1][i] = 1.0;
        }
        a[n - 1][n - 1] = 10.0;
        let (sym, num) = factor_dense(&a, &vec![1.0; n]);
        // the hub is eliminated last, so no fill appears
        assert_eq!(sym.fill(), n - 1);
        let x_true: Vec<f64> = (0..n).map(|i| i as f64 - 2.5).collect();
        let b = dense_mul(&a, &x_true);
        let x = sym.solve(&num, &b);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn solves_quasidefinite_system() {
        // [[K, E^T], [E, -delta]]
        let a = vec![
            vec![3.0, 1.0, 0.0, 1.0],
            vec![1.0, 2.0, 0.5, 1.0],
            vec![0.0, 0.5, 4.0, -1.0],
            vec![1.0, 1.0, -1.0, -1e-8],
        ];
        let (sym, num) = factor_dense(&a, &[1.0, 1.0, 1.0, -1.0]);
        assert_eq!(num.perturbed, 0);
        let x_true = [1.0, -2.0, 0.5, 3.0];
        let b = dense_mul(&a, &x_true);
        let x = sym.solve(&num, &b);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-9, "{u} vs {v}");
        }
    }

    #[test]
    fn fill_pattern_covers_random_sparse_matrices() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = rng.random_range(2..30);
            let mut a = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..i {
                    if rng.random::<f64>() < 0.15 {
                        let v: f64 = rng.random_range(-1.0..1.0);
                        a[i][j] = v;
                        a[j][i] = v;
                    }
                }
            }
            for i in 0..n {
                let off: f64 = a[i].iter().map(|v| v.abs()).sum();
                a[i][i] = off + 1.0;
            }
            let (sym, num) = factor_dense(&a, &vec![1.0; n]);
            let x_true: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let x = sym.solve(&num, &dense_mul(&a, &x_true));
            for (u, v) in x.iter().zip(&x_true) {
                assert!((u - v).abs() < 1e-10);
            }
        }
    }
}
