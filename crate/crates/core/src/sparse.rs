//! Compressed sparse row matrices with deterministic assembly.
//!
//! Triplets are merged by a stable sort on `(row, col)` followed by an
//! in-order sum, so the same triplet stream always produces bit-identical
//! values regardless of how many duplicates an entry receives.

use faer::sparse::{SparseColMat, Triplet};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Accumulates `(row, col, value)` entries before compression.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols, "triplet ({row},{col}) out of bounds");
        self.entries.push((row, col, value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, row_ptr, col_idx, values }
    }
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::identity(diag.len());
        m.values.copy_from_slice(diag);
        m
    }

    /// Builds from a dense row-major slice, dropping exact zeros.
    pub fn from_dense(nrows: usize, ncols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), nrows * ncols);
        let mut b = TripletBuilder::new(nrows, ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                let v = data[i * ncols + j];
                if v != 0.0 {
                    b.push(i, j, v);
                }
            }
        }
        b.build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nrows);
        let mut acc = 0.0;
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for (j, v) in self.row(i) {
                row += v * y[j];
            }
            acc += xi * row;
        }
        acc
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.col_idx {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                let dst = next[j];
                col_idx[dst] = i;
                values[dst] = self.values[k];
                next[j] += 1;
            }
        }
        Self { nrows: self.ncols, ncols: self.nrows, row_ptr: counts, col_idx, values }
    }

    /// Sparse product `self * rhs` (Gustavson, column order sorted per row).
    pub fn matmul(&self, rhs: &CsrMatrix) -> Self {
        assert_eq!(self.ncols, rhs.nrows, "dimension mismatch in matmul");
        let n = rhs.ncols;
        let mut marker = vec![usize::MAX; n];
        let mut acc = vec![0.0; n];
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut cols: Vec<usize> = Vec::new();
        for i in 0..self.nrows {
            cols.clear();
            for (k, a) in self.row(i) {
                for (j, b) in rhs.row(k) {
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = 0.0;
                        cols.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            cols.sort_unstable();
            for &j in &cols {
                col_idx.push(j);
                values.push(acc[j]);
            }
            row_ptr.push(col_idx.len());
        }
        Self { nrows: self.nrows, ncols: n, row_ptr, col_idx, values }
    }

    /// `self + alpha * other` with the union sparsity pattern.
    pub fn add_scaled(&self, other: &CsrMatrix, alpha: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut b = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz() + other.nnz());
        for (i, j, v) in self.triplets() {
            b.push(i, j, v);
        }
        for (i, j, v) in other.triplets() {
            b.push(i, j, alpha * v);
        }
        b.build()
    }

    pub fn scale(&self, alpha: f64) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= alpha);
        m
    }

    /// `D A D` for `D = diag(d)`.
    pub fn scale_symmetric(&self, d: &[f64]) -> Self {
        assert_eq!(self.nrows, self.ncols);
        let mut m = self.clone();
        for i in 0..m.nrows {
            for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                m.values[k] *= d[i] * d[m.col_idx[k]];
            }
        }
        m
    }

    /// Symmetric Ruiz equilibration: returns `d` such that every row of
    /// `D A D` has max-norm close to one. Empty rows get `d_i = 1`.
    pub fn equilibrate(&self, iterations: usize) -> Vec<f64> {
        let mut d = vec![1.0; self.nrows];
        for _ in 0..iterations {
            let mut row_max = vec![0.0f64; self.nrows];
            for i in 0..self.nrows {
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    let v = (self.values[k] * d[i] * d[self.col_idx[k]]).abs();
                    row_max[i] = row_max[i].max(v);
                }
            }
            for (di, r) in d.iter_mut().zip(&row_max) {
                if *r > 0.0 {
                    *di /= r.sqrt();
                }
            }
        }
        d
    }

    /// Largest `|a_ij - a_ji|` over all stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for (i, j, v) in self.triplets() {
            worst = worst.max((v - self.get(j, i)).abs());
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Symmetric submatrix `A[idx, idx]`; `idx` must be sorted and unique.
    pub fn principal_submatrix(&self, idx: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.ncols];
        for (k, &i) in idx.iter().enumerate() {
            pos[i] = k;
        }
        let mut b = TripletBuilder::new(idx.len(), idx.len());
        for (k, &i) in idx.iter().enumerate() {
            for (j, v) in self.row(i) {
                if pos[j] != usize::MAX {
                    b.push(k, pos[j], v);
                }
            }
        }
        b.build()
    }

    /// Dense row-major copy. Intended for small matrices only.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows * self.ncols];
        for (i, j, v) in self.triplets() {
            d[i * self.ncols + j] = v;
        }
        d
    }

    pub fn to_faer(&self) -> SparseColMat<usize, f64> {
        let trips: Vec<Triplet<usize, usize, f64>> =
            self.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trips)
            .expect("valid CSR pattern converts to CSC")
    }
}

/// Block matrix `[[a, b], [c, d]]` from four CSR blocks with compatible shapes.
pub fn block2x2(a: &CsrMatrix, b: &CsrMatrix, c: &CsrMatrix, d: &CsrMatrix) -> CsrMatrix {
    assert_eq!(a.nrows, b.nrows);
    assert_eq!(c.nrows, d.nrows);
    assert_eq!(a.ncols, c.ncols);
    assert_eq!(b.ncols, d.ncols);
    let (m, n) = (a.nrows + c.nrows, a.ncols + b.ncols);
    let mut t = TripletBuilder::with_capacity(m, n, a.nnz() + b.nnz() + c.nnz() + d.nnz());
    for (i, j, v) in a.triplets() {
        t.push(i, j, v);
    }
    for (i, j, v) in b.triplets() {
        t.push(i, a.ncols + j, v);
    }
    for (i, j, v) in c.triplets() {
        t.push(a.nrows + i, j, v);
    }
    for (i, j, v) in d.triplets() {
        t.push(a.nrows + i, a.ncols + j, v);
    }
    t.build()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        CsrMatrix::from_dense(2, 3, &[1.0, 0.0, 2.0, 0.0, 3.0, 4.0])
    }

    #[test]
    fn duplicates_are_summed() {
        let mut b = TripletBuilder::new(2, 2);
        b.push(1, 1, 1.0);
        b.push(0, 0, 2.0);
        b.push(1, 1, 0.5);
        let m = b.build();
        assert_eq!(m.get(1, 1), 1.5);
        assert_eq!(m.get(0, 0), 2.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn transpose_and_matmul() {
        let a = sample();
        let at = a.transpose();
        assert_eq!(at.get(2, 1), 4.0);
        let g = a.matmul(&at);
        assert_eq!(g.to_dense(), vec![5.0, 8.0, 8.0, 25.0]);
        assert_eq!(g.max_asymmetry(), 0.0);
    }

    #[test]
    fn matvec_and_bilinear() {
        let a = sample();
        assert_eq!(a.mul_vec(&[1.0, 1.0, 1.0]), vec![3.0, 7.0]);
        let s = CsrMatrix::from_dense(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        assert_eq!(s.bilinear(&[1.0, 2.0], &[1.0, 2.0]), 2.0 + 2.0 + 2.0 + 12.0);
    }

    #[test]
    fn blocks_and_submatrix() {
        let i = CsrMatrix::identity(2);
        let z = CsrMatrix::zeros(2, 2);
        let big = block2x2(&i, &z, &z, &i.scale(3.0));
        assert_eq!(big.get(3, 3), 3.0);
        let sub = big.principal_submatrix(&[1, 3]);
        assert_eq!(sub.to_dense(), vec![1.0, 0.0, 0.0, 3.0]);
        let sum = i.add_scaled(&i, -1.0);
        assert!(sum.triplets().all(|(_, _, v)| v == 0.0));
    }

    #[test]
    fn equilibration_balances_rows() {
        let a = CsrMatrix::from_dense(3, 3, &[1e12, 1.0, 0.0, 1.0, 0.0, 1e-3, 0.0, 1e-3, 1e-9]);
        let d = a.equilibrate(20);
        let s = a.scale_symmetric(&d);
        for i in 0..3 {
            let m = s.row(i).fold(0.0f64, |m, (_, v)| m.max(v.abs()));
            assert!((m - 1.0).abs() < 1e-3, "row {i}: {m}");
        }
        assert_eq!(s.max_asymmetry(), 0.0);
    }
}
