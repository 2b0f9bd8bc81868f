//! Row-major `f32` matrix with the few kernels the model needs.
//!
//! `matmul` computes every output row independently, accumulating over the
//! inner dimension in ascending order. A row's result therefore does not
//! depend on which other rows share the call, which is what makes block and
//! token-by-token decoding agree bit for bit.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data does not match {rows}x{cols}");
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.cols.max(1))
    }

    /// `self · rhs` where `rhs` is `[inner, out]`.
    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            let x = self.row(r);
            let o = out.row_mut(r);
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                for (oc, wc) in o.iter_mut().zip(rhs.row(i)) {
                    *oc += xi * wc;
                }
            }
        }
        out
    }

    /// Adds `bias` to every row.
    pub fn add_row_vector(&mut self, bias: &[f32]) {
        for r in 0..self.rows {
            for (v, b) in self.row_mut(r).iter_mut().zip(bias) {
                *v += b;
            }
        }
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let b = Matrix::from_vec(2, 3, vec![1.0, 0.0, -1.0, 0.5, 1.0, 2.0]);
        let c = a.matmul(&b);
        assert_eq!(c.data, vec![2.0, 2.0, 3.0, 5.0, 4.0, 5.0]);
    }

    #[test]
    fn rows_are_independent_of_batch() {
        let a = Matrix::from_vec(3, 3, (0..9).map(|i| (i as f32 * 0.37).sin()).collect());
        let w = Matrix::from_vec(3, 2, (0..6).map(|i| (i as f32 * 1.1).cos()).collect());
        let full = a.matmul(&w);
        for r in 0..3 {
            let single = Matrix::from_vec(1, 3, a.row(r).to_vec()).matmul(&w);
            assert_eq!(single.row(0), full.row(r));
        }
    }
}
