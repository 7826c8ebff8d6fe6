//! Dense column-major sample matrix.

use serde::{Deserialize, Serialize};

/// `n_rows x n_cols` matrix of samples (rows) by features (columns), stored
/// column-major so that a feature column is a contiguous slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    /// Builds a matrix from feature columns of equal length.
    ///
    /// # Panics
    /// If the columns differ in length.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Self {
        let n_cols = columns.len();
        let n_rows = columns.first().map_or(0, Vec::len);
        assert!(
            columns.iter().all(|c| c.len() == n_rows),
            "ragged feature columns"
        );
        Self {
            n_rows,
            n_cols,
            data: columns.into_iter().flatten().collect(),
        }
    }

    /// Builds a matrix from sample rows of equal length.
    ///
    /// # Panics
    /// If the rows differ in length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = Self::zeros(n_rows, n_cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            assert_eq!(r.len(), n_cols, "ragged sample rows");
            for (j, v) in r.iter().enumerate() {
                m.data[j * n_rows + i] = *v;
            }
        }
        m
    }

    /// Single-feature matrix.
    pub fn column_vector(values: Vec<f64>) -> Self {
        Self::from_columns(vec![values])
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
    pub fn is_empty(&self) -> bool {
        self.n_rows == 0
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.n_rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.n_rows + i] = v;
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.n_cols).map(|j| self.get(i, j)).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    /// New matrix holding the given rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let columns = (0..self.n_cols)
            .map(|j| {
                let col = self.column(j);
                idx.iter().map(|&i| col[i]).collect()
            })
            .collect();
        let mut m = Self::from_columns(columns);
        if self.n_cols == 0 {
            m.n_rows = idx.len();
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
