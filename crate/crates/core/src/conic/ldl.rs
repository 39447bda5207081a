//! Sparse quasi-definite LDL' factorization with a minimum-degree ordering,
//! elimination-tree symbolic analysis and up-looking numeric phase.

use std::collections::{BTreeSet, HashMap};

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub(crate) struct SparseLdl {
    n: usize,
    /// `perm[k]` is the original index placed at position `k`.
    perm: Vec<usize>,
    /// Upper triangle of the permuted matrix, column-compressed.
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    /// Expected sign of each pivot, permuted order.
    signs: Vec<f64>,
    parent: Vec<usize>,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    d: Vec<f64>,
    /// Number of pivots replaced during the last factorization.
    pub regularized: usize,
}

impl SparseLdl {
    /// Builds the structure for a symmetric pattern. `entries` may list either
    /// triangle and may repeat positions; the returned vector gives the value
    /// slot of each entry. Diagonal entries are always present.
    pub fn new(n: usize, entries: &[(usize, usize)], signs: &[f64]) -> (Self, Vec<usize>) {
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for &(i, j) in entries {
            if i != j {
                adj[i].insert(j);
                adj[j].insert(i);
            }
        }
        let perm = min_degree(adj);
        let mut pinv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            pinv[p] = k;
        }

        // Slots keyed by permuted (row <= col).
        let key_of = |i: usize, j: usize| {
            let (a, b) = (pinv[i], pinv[j]);
            if a <= b {
                (a, b)
            } else {
                (b, a)
            }
        };
        let mut keys: Vec<(usize, usize)> = (0..n).map(|k| (k, k)).collect();
        keys.extend(entries.iter().map(|&(i, j)| key_of(i, j)));
        keys.sort_unstable_by_key(|&(r, c)| (c, r));
        keys.dedup();
        let mut col_ptr = vec![0; n + 1];
        let mut row_idx = Vec::with_capacity(keys.len());
        let mut slot: HashMap<(usize, usize), usize> = HashMap::with_capacity(keys.len());
        for (s, &(r, c)) in keys.iter().enumerate() {
            col_ptr[c + 1] += 1;
            row_idx.push(r);
            slot.insert((r, c), s);
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }
        let slots = entries.iter().map(|&(i, j)| slot[&key_of(i, j)]).collect();

        // Symbolic: elimination tree and column counts.
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for p in col_ptr[k]..col_ptr[k + 1] {
                let mut i = row_idx[p];
                if i < k {
                    while flag[i] != k {
                        if parent[i] == NONE {
                            parent[i] = k;
                        }
                        lnz[i] += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                }
            }
        }
        let mut l_ptr = vec![0; n + 1];
        for k in 0..n {
            l_ptr[k + 1] = l_ptr[k] + lnz[k];
        }
        let nnz = l_ptr[n];
        let psigns = perm.iter().map(|&p| signs[p]).collect();
        let ldl = Self {
            n,
            perm,
            col_ptr,
            values: vec![0.0; row_idx.len()],
            row_idx,
            signs: psigns,
            parent,
            l_ptr,
            l_idx: vec![0; nnz],
            l_val: vec![0.0; nnz],
            d: vec![0.0; n],
            regularized: 0,
        };
        (ldl, slots)
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Numeric factorization. Pivots whose sign disagrees with the expected
    /// sign, or whose magnitude is below `eps`, are replaced by `sign * delta`.
    pub fn factor(&mut self, eps: f64, delta: f64) {
        let n = self.n;
        let mut y = vec![0.0; n];
        let mut pattern = vec![0usize; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        self.regularized = 0;
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            y[k] = 0.0;
            for p in self.col_ptr[k]..self.col_ptr[k + 1] {
                let mut i = self.row_idx[p];
                y[i] += self.values[p];
                let mut len = 0;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = self.parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    pattern[top] = pattern[len];
                }
            }
            let mut dk = y[k];
            y[k] = 0.0;
            while top < n {
                let i = pattern[top];
                let yi = y[i];
                y[i] = 0.0;
                let p2 = self.l_ptr[i] + lnz[i];
                for p in self.l_ptr[i]..p2 {
                    y[self.l_idx[p]] -= self.l_val[p] * yi;
                }
                let lki = yi / self.d[i];
                dk -= lki * yi;
                self.l_idx[p2] = k;
                self.l_val[p2] = lki;
                lnz[i] += 1;
                top += 1;
            }
            let sign = self.signs[k];
            if !(sign * dk >= eps) {
                dk = sign * delta;
                self.regularized += 1;
            }
            self.d[k] = dk;
        }
    }

    /// Solves in place, `b` in original ordering.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for j in 0..n {
            let xj = x[j];
            for p in self.l_ptr[j]..self.l_ptr[j + 1] {
                x[self.l_idx[p]] -= self.l_val[p] * xj;
            }
        }
        for j in 0..n {
            x[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut s = x[j];
            for p in self.l_ptr[j]..self.l_ptr[j + 1] {
                s -= self.l_val[p] * x[self.l_idx[p]];
            }
            x[j] = s;
        }
        for (k, &p) in self.perm.iter().enumerate() {
            b[p] = x[k];
        }
    }

    #[cfg(test)]
    fn factor_nnz(&self) -> usize {
        self.l_idx.len()
    }
}

/// Greedy minimum-degree ordering on the explicit elimination graph.
/// Ties go to the lowest index, so the ordering is deterministic.
fn min_degree(mut adj: Vec<BTreeSet<usize>>) -> Vec<usize> {
    let n = adj.len();
    let mut eliminated = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut buckets: BTreeSet<(usize, usize)> = (0..n).map(|i| (adj[i].len(), i)).collect();
    while let Some((_, v)) = buckets.pop_first() {
        eliminated[v] = true;
        order.push(v);
        let nbrs: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
        for &a in &nbrs {
            buckets.remove(&(adj[a].len(), a));
            adj[a].remove(&v);
        }
        for (ia, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[ia + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        for &a in &nbrs {
            if !eliminated[a] {
                buckets.insert((adj[a].len(), a));
            }
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_mul(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum())
            .collect()
    }

    #[test]
    fn solves_quasi_definite_system() {
        // [[4 1 0 1], [1 3 0 0], [0 0 2 1], [1 0 1 -1]] with the last pivot negative.
        let a = vec![
            vec![4.0, 1.0, 0.0, 1.0],
            vec![1.0, 3.0, 0.0, 0.0],
            vec![0.0, 0.0, 2.0, 1.0],
            vec![1.0, 0.0, 1.0, -1.0],
        ];
        let mut entries = Vec::new();
        let mut vals = Vec::new();
        for i in 0..4 {
            for j in i..4 {
                if a[i][j] != 0.0 {
                    entries.push((i, j));
                    vals.push(a[i][j]);
                }
            }
        }
        let (mut ldl, slots) = SparseLdl::new(4, &entries, &[1.0, 1.0, 1.0, -1.0]);
        for (s, v) in slots.iter().zip(&vals) {
            ldl.values_mut()[*s] += v;
        }
        ldl.factor(1e-14, 1e-8);
        assert_eq!(ldl.regularized, 0);
        let xs = [1.0, -2.0, 0.5, 3.0];
        let mut b = dense_mul(&a, &xs);
        ldl.solve(&mut b);
        for (p, q) in b.iter().zip(&xs) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn arrow_matrix_orders_hub_last() {
        // Hub node 0 connected to all others: eliminating it first would fill in completely.
        let n = 30;
        let entries: Vec<(usize, usize)> = (1..n).map(|i| (0, i)).collect();
        let (ldl, _) = SparseLdl::new(n, &entries, &vec![1.0; n]);
        assert_eq!(ldl.factor_nnz(), n - 1);
    }
}
