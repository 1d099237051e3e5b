//! Compressed-sparse-row matrices and the kernels the solvers need:
//! matrix-vector products, Gauss-Seidel sweeps in a fixed row order,
//! transposes and sparse triple products.

use nalgebra::DMatrix;

/// Accumulates (row, col, value) triplets; duplicate entries are summed.
#[derive(Clone, Debug)]
pub struct CooBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CooBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    /// Sorts triplets by (row, col) and merges duplicates. The sort is
    /// stable, so summation order is a fixed function of the push order.
    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut cur_row = 0usize;
        for &(r, c, v) in &self.entries {
            while cur_row < r {
                cur_row += 1;
                row_ptr[cur_row] = values.len();
            }
            if values.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
            }
        }
        while cur_row < self.nrows {
            cur_row += 1;
            row_ptr[cur_row] = values.len();
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, row_ptr, col_idx, values }
    }
}

/// Square or rectangular sparse matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        let mut b = CooBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 1.0);
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

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
        y
    }

    /// y = A^t x
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                y[c] += v * x[r];
            }
        }
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut b = CooBuilder::new(self.ncols, self.nrows);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                b.push(c, r, v);
            }
        }
        b.build()
    }

    /// C = A B
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows);
        let mut b = CooBuilder::new(self.nrows, other.ncols);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let (bc, bv) = other.row(c);
                for (&c2, &v2) in bc.iter().zip(bv) {
                    b.push(r, c2, v * v2);
                }
            }
        }
        b.build()
    }

    /// Largest relative asymmetry max |A - A^t| / max |A|.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut max_diff: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                max_abs = max_abs.max(v.abs());
                max_diff = max_diff.max((v - t.get(r, c)).abs());
            }
        }
        if max_abs == 0.0 {
            0.0
        } else {
            max_diff / max_abs
        }
    }

    /// (A + A^t) / 2
    pub fn symmetrized(&self) -> CsrMatrix {
        let t = self.transpose();
        let mut b = CooBuilder::new(self.nrows, self.ncols);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                b.push(r, c, 0.5 * v);
            }
            let (cols, vals) = t.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                b.push(r, c, 0.5 * v);
            }
        }
        b.build()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// One forward Gauss-Seidel sweep on A x = b, rows in ascending order,
    /// updating x in place.
    pub fn gs_forward_sweep(&self, x: &mut [f64], b: &[f64]) -> Result<(), SparseError> {
        assert_eq!(self.nrows, self.ncols);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = b[r];
            let mut diag = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                if c == r {
                    diag = v;
                } else {
                    acc -= v * x[c];
                }
            }
            if diag == 0.0 {
                return Err(SparseError::ZeroDiagonal(r));
            }
            x[r] = acc / diag;
        }
        Ok(())
    }

    /// One backward Gauss-Seidel sweep (descending row order).
    pub fn gs_backward_sweep(&self, x: &mut [f64], b: &[f64]) -> Result<(), SparseError> {
        assert_eq!(self.nrows, self.ncols);
        for r in (0..self.nrows).rev() {
            let (cols, vals) = self.row(r);
            let mut acc = b[r];
            let mut diag = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                if c == r {
                    diag = v;
                } else {
                    acc -= v * x[c];
                }
            }
            if diag == 0.0 {
                return Err(SparseError::ZeroDiagonal(r));
            }
            x[r] = acc / diag;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SparseError {
    #[error("zero diagonal entry in row {0}")]
    ZeroDiagonal(usize),
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CsrMatrix {
        let mut b = CooBuilder::new(2, 2);
        b.push(0, 0, 2.0);
        b.push(0, 1, -1.0);
        b.push(1, 0, -1.0);
        b.push(1, 1, 2.0);
        b.build()
    }

    #[test]
    fn coo_merges_duplicates() {
        let mut b = CooBuilder::new(2, 2);
        b.push(0, 0, 1.0);
        b.push(0, 0, 2.5);
        b.push(1, 1, 1.0);
        let m = b.build();
        assert_eq!(m.get(0, 0), 3.5);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn spmv_and_transpose() {
        let m = small();
        let y = m.mul_vec(&[1.0, 2.0]);
        assert_eq!(y, vec![0.0, 3.0]);
        let yt = m.mul_transpose_vec(&[1.0, 2.0]);
        assert_eq!(yt, vec![0.0, 3.0]);
    }

    #[test]
    fn forward_sweep_hand_value() {
        // A = [[2,-1],[-1,2]], b = (1,1), start 0: x1 = 1/2, x2 = (1+1/2)/2 = 3/4
        let m = small();
        let mut x = vec![0.0, 0.0];
        m.gs_forward_sweep(&mut x, &[1.0, 1.0]).unwrap();
        assert_eq!(x, vec![0.5, 0.75]);
    }

    #[test]
    fn matmul_matches_dense() {
        let m = small();
        let p = m.matmul(&m);
        let d = m.to_dense() * m.to_dense();
        assert_eq!(p.to_dense(), d);
    }

    #[test]
    fn zero_diagonal_is_an_error() {
        let mut b = CooBuilder::new(2, 2);
        b.push(0, 1, 1.0);
        b.push(1, 0, 1.0);
        let m = b.build();
        let mut x = vec![0.0, 0.0];
        assert!(m.gs_forward_sweep(&mut x, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn empty_rows_are_preserved() {
        let mut b = CooBuilder::new(3, 3);
        b.push(2, 2, 1.0);
        let m = b.build();
        assert_eq!(m.mul_vec(&[1.0, 1.0, 1.0]), vec![0.0, 0.0, 1.0]);
    }
}
