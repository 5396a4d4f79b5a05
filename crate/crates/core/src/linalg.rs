//! Symmetric positive-definite solves for reduced graph Laplacians.
//!
//! Small systems go through nalgebra's dense Cholesky. Larger ones use a
//! sparse LDLᵀ with reverse Cuthill–McKee ordering.

use nalgebra::{DMatrix, DVector};

use crate::network::Network;

/// Systems with fewer unknowns than this are factored densely.
pub const DENSE_THRESHOLD: usize = 50;

/// Symmetric matrix in compressed-column form storing both triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymmetric {
    /// Builds from `(row, col, value)` triplets given for the lower or upper
    /// triangle or both; off-diagonal triplets are mirrored and duplicates summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            cols[j].push((i, v));
            if i != j {
                cols[i].push((j, v));
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for mut col in cols {
            col.sort_by_key(|&(i, _)| i);
            let mut last = usize::MAX;
            for (i, v) in col {
                if i == last {
                    *values.last_mut().unwrap() += v;
                } else {
                    row_idx.push(i);
                    values.push(v);
                    last = i;
                }
            }
            col_ptr.push(row_idx.len());
        }
        Self {
            n,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let col = &self.row_idx[self.col_ptr[j]..self.col_ptr[j + 1]];
        match col.binary_search(&i) {
            Ok(p) => self.values[self.col_ptr[j] + p],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                m[(self.row_idx[p], j)] = self.values[p];
            }
        }
        m
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[p]] += self.values[p] * x[j];
            }
        }
        y
    }
}

/// Weighted Laplacian of `network` with the slack row and column removed.
/// Node `i ≥ 1` maps to index `i − 1`.
pub fn reduced_laplacian(network: &Network, weights: &[f64]) -> SparseSymmetric {
    let mut triplets = Vec::with_capacity(3 * network.num_edges());
    for (edge, &w) in network.edges().iter().zip(weights) {
        let (a, b) = (edge.from, edge.to);
        if a > 0 {
            triplets.push((a - 1, a - 1, w));
        }
        if b > 0 {
            triplets.push((b - 1, b - 1, w));
        }
        if a > 0 && b > 0 {
            triplets.push((a.max(b) - 1, a.min(b) - 1, -w));
        }
    }
    SparseSymmetric::from_triplets(network.num_free(), &triplets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotPositiveDefinite;

/// Factorization of an SPD matrix, dense or sparse depending on size.
#[derive(Debug, Clone)]
pub enum SpdFactor {
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Sparse(SparseLdl),
}

impl SpdFactor {
    pub fn new(a: &SparseSymmetric) -> Result<Self, NotPositiveDefinite> {
        if a.dim() < DENSE_THRESHOLD {
            Self::dense(a)
        } else {
            SparseLdl::factor(a).map(SpdFactor::Sparse)
        }
    }

    pub fn dense(a: &SparseSymmetric) -> Result<Self, NotPositiveDefinite> {
        a.to_dense()
            .cholesky()
            .map(SpdFactor::Dense)
            .ok_or(NotPositiveDefinite)
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            SpdFactor::Dense(c) => c.solve(&DVector::from_column_slice(rhs)).as_slice().to_vec(),
            SpdFactor::Sparse(l) => l.solve(rhs),
        }
    }
}

/// Sparse `P A Pᵀ = L D Lᵀ` with unit lower-triangular `L`.
#[derive(Debug, Clone)]
pub struct SparseLdl {
    n: usize,
    perm: Vec<usize>,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    d: Vec<f64>,
}

impl SparseLdl {
    pub fn factor(a: &SparseSymmetric) -> Result<Self, NotPositiveDefinite> {
        let n = a.n;
        let perm = reverse_cuthill_mckee(a);
        let mut pinv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            pinv[p] = k;
        }

        // elimination tree and column counts of L
        let mut parent = vec![usize::MAX; n];
        let mut flag = vec![usize::MAX; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            let kk = perm[k];
            for p in a.col_ptr[kk]..a.col_ptr[kk + 1] {
                let mut i = pinv[a.row_idx[p]];
                if i < k {
                    while flag[i] != k {
                        if parent[i] == usize::MAX {
                            parent[i] = k;
                        }
                        lnz[i] += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                }
            }
        }
        let mut l_ptr = vec![0usize; n + 1];
        for k in 0..n {
            l_ptr[k + 1] = l_ptr[k] + lnz[k];
        }

        let nnz = l_ptr[n];
        let mut l_idx = vec![0usize; nnz];
        let mut l_val = vec![0.0; nnz];
        let mut d = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut pattern = vec![0usize; n];
        lnz.iter_mut().for_each(|c| *c = 0);
        flag.iter_mut().for_each(|f| *f = usize::MAX);

        for k in 0..n {
            y[k] = 0.0;
            let mut top = n;
            flag[k] = k;
            let kk = perm[k];
            for p in a.col_ptr[kk]..a.col_ptr[kk + 1] {
                let mut i = pinv[a.row_idx[p]];
                if i <= k {
                    y[i] += a.values[p];
                    let mut len = 0;
                    while flag[i] != k {
                        pattern[len] = i;
                        len += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                    while len > 0 {
                        top -= 1;
                        len -= 1;
                        pattern[top] = pattern[len];
                    }
                }
            }
            d[k] = y[k];
            y[k] = 0.0;
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = 0.0;
                let end = l_ptr[i] + lnz[i];
                for p in l_ptr[i]..end {
                    y[l_idx[p]] -= l_val[p] * yi;
                }
                let l_ki = yi / d[i];
                d[k] -= l_ki * yi;
                l_idx[end] = k;
                l_val[end] = l_ki;
                lnz[i] += 1;
            }
            if !(d[k] > 0.0) || !d[k].is_finite() {
                return Err(NotPositiveDefinite);
            }
        }
        Ok(Self {
            n,
            perm,
            l_ptr,
            l_idx,
            l_val,
            d,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for j in 0..self.n {
            let xj = x[j];
            for p in self.l_ptr[j]..self.l_ptr[j + 1] {
                x[self.l_idx[p]] -= self.l_val[p] * xj;
            }
        }
        for j in 0..self.n {
            x[j] /= self.d[j];
        }
        for j in (0..self.n).rev() {
            let mut xj = x[j];
            for p in self.l_ptr[j]..self.l_ptr[j + 1] {
                xj -= self.l_val[p] * x[self.l_idx[p]];
            }
            x[j] = xj;
        }
        let mut out = vec![0.0; self.n];
        for (k, &p) in self.perm.iter().enumerate() {
            out[p] = x[k];
        }
        out
    }

    pub fn factor_nnz(&self) -> usize {
        self.l_idx.len()
    }
}

/// Reverse Cuthill–McKee ordering; handles disconnected patterns by
/// restarting from a minimum-degree unvisited vertex.
fn reverse_cuthill_mckee(a: &SparseSymmetric) -> Vec<usize> {
    let n = a.n;
    let degree: Vec<usize> = (0..n).map(|j| a.col_ptr[j + 1] - a.col_ptr[j]).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let start = (0..n)
            .filter(|&v| !visited[v])
            .min_by_key(|&v| degree[v])
            .unwrap();
        visited[start] = true;
        let mut head = order.len();
        order.push(start);
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut nbrs: Vec<usize> = a.row_idx[a.col_ptr[v]..a.col_ptr[v + 1]]
                .iter()
                .copied()
                .filter(|&u| !visited[u])
                .collect();
            nbrs.sort_by_key(|&u| degree[u]);
            for u in nbrs {
                visited[u] = true;
                order.push(u);
            }
        }
    }
    order.reverse();
    order
}

/// Dense inverse of an SPD matrix via Cholesky.
pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>, NotPositiveDefinite> {
    a.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(NotPositiveDefinite)
}
