//! Compressed sparse row matrices.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        CsrMatrix {
            n_rows,
            n_cols,
            indptr: vec![0; n_rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from coordinate triplets. Duplicates are summed; columns within
    /// a row end up sorted.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
        for &(r, c, v) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::DimensionMismatch(format!(
                    "entry ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
            rows[r].push((c, v));
        }
        Ok(Self::from_rows(n_cols, rows))
    }

    /// Builds from per-row `(column, value)` lists.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows.iter().cloned() {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                debug_assert!(c < n_cols);
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            n_rows: rows.len(),
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.values[self.indptr[r]..self.indptr[r + 1]].iter().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.row_sum(r)).collect()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(i) => self.values[span.start + i],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n_cols];
        for (r, c, v) in self.iter() {
            rows[c].push((r, v));
        }
        Self::from_rows(self.n_rows, rows)
    }

    /// Exact structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols && *self == self.transpose()
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols, "vector length");
        (0..self.n_rows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// Applies `f(row, value)` to every stored value.
    pub fn map_rows(&self, mut f: impl FnMut(usize, f64) -> f64) -> CsrMatrix {
        let mut out = self.clone();
        for r in 0..self.n_rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out.values[k] = f(r, self.values[k]);
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (r, c, v) in self.iter() {
            dense[r][c] += v;
        }
        dense
    }

    /// One `row col weight` line per stored entry.
    pub fn to_coo_text(&self) -> String {
        let mut out = String::new();
        for (r, c, v) in self.iter() {
            writeln!(out, "{r} {c} {v:e}").unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 0.5), (1, 1, 3.0)]).unwrap();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.row(0).collect::<Vec<_>>(), vec![(0, 2.0), (2, 1.5)]);
        assert_eq!(m.get(1, 1), 3.0);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.mul_vec(&[1.0, 1.0, 2.0]), vec![5.0, 3.0]);
        assert_eq!(m.transpose().get(2, 0), 1.5);
        assert!(CsrMatrix::from_triplets(1, 1, &[(1, 0, 1.0)]).is_err());
    }
}
