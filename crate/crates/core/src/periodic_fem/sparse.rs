//! Compressed sparse row storage.

use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists, already sorted and merged.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let nrows = rows.len();
        let nnz = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            nrows,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        par::fill_indexed(y, |i| self.row(i).map(|(c, v)| v * x[c]).sum());
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.spmv(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        par::max_range(self.nrows, |i| self.row(i).map(|(_, v)| v.abs()).sum())
    }

    /// `max |A_ij - A_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        par::max_range(self.nrows, |i| {
            self.row(i)
                .map(|(j, v)| (v - self.get(j, i)).abs())
                .fold(0.0, f64::max)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spmv_and_lookup() {
        let m = CsrMatrix::from_rows(vec![
            vec![(0, 2.0), (1, -1.0)],
            vec![(0, -1.0), (1, 2.0), (2, -1.0)],
            vec![(1, -1.0), (2, 2.0)],
        ]);
        assert_eq!(m.mul(&[1.0, 1.0, 1.0]), vec![1.0, 0.0, 1.0]);
        assert_eq!(m.get(0, 2), 0.0);
        assert_eq!(m.diagonal(), vec![2.0, 2.0, 2.0]);
        assert_eq!(m.norm_inf(), 4.0);
        assert_eq!(m.max_asymmetry(), 0.0);
        assert_eq!(m.nnz(), 7);
    }
}
