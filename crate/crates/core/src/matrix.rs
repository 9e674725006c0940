use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense column-major matrix of `f64`.
///
/// Column-major because every consumer (split search, standardization, PCA)
/// scans whole columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_columns(rows: usize, columns: Vec<Vec<f64>>) -> Result<Self> {
        let cols = columns.len();
        let mut data = Vec::with_capacity(rows * cols);
        for (j, c) in columns.into_iter().enumerate() {
            if c.len() != rows {
                return Err(Error::invalid(format!(
                    "column {j} has {} entries, expected {rows}",
                    c.len()
                )));
            }
            data.extend(c);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(n, cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::invalid(format!("row {i} has {} entries, expected {cols}", r.len())));
            }
            for (j, &v) in r.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.rows + row]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[col * self.rows + row] = value;
    }

    #[inline]
    pub fn col(&self, col: usize) -> &[f64] {
        &self.data[col * self.rows..(col + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, col: usize) -> &mut [f64] {
        &mut self.data[col * self.rows..(col + 1) * self.rows]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self.get(row, j)).collect()
    }

    /// New matrix holding the given rows, in order (duplicates allowed).
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut out = Self::zeros(indices.len(), self.cols);
        for j in 0..self.cols {
            let src = self.col(j);
            let dst = out.col_mut(j);
            for (k, &i) in indices.iter().enumerate() {
                dst[k] = src[i];
            }
        }
        out
    }

    /// Appends a column at the right edge.
    pub fn push_col(&mut self, column: &[f64]) -> Result<()> {
        if column.len() != self.rows {
            return Err(Error::invalid(format!(
                "column has {} entries, expected {}",
                column.len(),
                self.rows
            )));
        }
        self.data.extend_from_slice(column);
        self.cols += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_column_major() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(m.col(0), &[1.0, 3.0, 5.0]);
        assert_eq!(m.row(2), vec![5.0, 6.0]);
        let s = m.select_rows(&[2, 2, 0]);
        assert_eq!(s.col(1), &[6.0, 6.0, 2.0]);
    }

    #[test]
    fn ragged_input_rejected() {
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(Matrix::from_columns(2, vec![vec![1.0]]).is_err());
    }
}
