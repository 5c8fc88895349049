//! Small dense matrices with partial-pivoting LU.
//!
//! Used as the direct reference solver for tiny systems (oracles, fixtures).
//! Never used on the time-stepping path.

use super::csr::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        Self {
            n_rows,
            n_cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn from_csr(m: &CsrMatrix) -> Self {
        Self::from_rows(&m.to_dense())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_cols + j] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_cols + j] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| (0..self.n_cols).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// Solves `self * x = b` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n_rows;
        if n != self.n_cols || b.len() != n {
            return Err(Error::Dimension("dense solve needs a square system".into()));
        }
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
                .unwrap();
            if a[p * n + k] == 0.0 {
                return Err(Error::Dimension(format!("singular dense matrix at column {k}")));
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                x.swap(k, p);
            }
            let pivot = a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / pivot;
                if f == 0.0 {
                    continue;
                }
                for j in k..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
                x[i] -= f * x[k];
            }
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= a[i * n + j] * x[j];
            }
            x[i] = acc / a[i * n + i];
        }
        Ok(x)
    }

    /// Doolittle LU without pivoting; returns `(L, U)` as dense rows.
    pub fn lu_no_pivot(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = self.n_rows;
        let mut l = vec![vec![0.0; n]; n];
        let mut u = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                u[i][j] = self.get(i, j) - (0..i).map(|k| l[i][k] * u[k][j]).sum::<f64>();
            }
            l[i][i] = 1.0;
            for j in i + 1..n {
                l[j][i] = (self.get(j, i) - (0..i).map(|k| l[j][k] * u[k][i]).sum::<f64>()) / u[i][i];
            }
        }
        (l, u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_with_pivoting() {
        let m = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]);
        assert_eq!(m.solve(&[1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn singular_is_reported() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(m.solve(&[1.0, 1.0]).is_err());
    }
}
