//! ILU(0) incomplete factorization.
//!
//! The factors live in a copy of the input's sparsity pattern: the strictly
//! lower part holds L (unit diagonal implied), the diagonal and upper part
//! hold U. Pivots smaller than `PIVOT_SHIFT * max|row|` are shifted.

use super::csr::{row_dot, CsrMatrix};
use super::Preconditioner;
use crate::error::{Error, Result};

const PIVOT_SHIFT: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Ilu0 {
    factors: CsrMatrix,
    diag_pos: Vec<usize>,
    shifted_pivots: usize,
}

impl Ilu0 {
    pub fn factor(m: &CsrMatrix) -> Result<Self> {
        if m.n_rows() != m.n_cols() {
            return Err(Error::Dimension("ILU(0) needs a square matrix".into()));
        }
        let n = m.n_rows();
        let mut factors = m.clone();
        let offsets = factors.row_offsets().to_vec();
        let cols = factors.col_indices().to_vec();
        let mut diag_pos = Vec::with_capacity(n);
        for i in 0..n {
            let (s, e) = (offsets[i], offsets[i + 1]);
            match cols[s..e].binary_search(&i) {
                Ok(k) => diag_pos.push(s + k),
                Err(_) => return Err(Error::MissingDiagonal(i)),
            }
        }

        let row_max: Vec<f64> = (0..n)
            .map(|i| m.row(i).1.iter().fold(0.0_f64, |a, v| a.max(v.abs())))
            .collect();
        let mut marker = vec![usize::MAX; n];
        let mut shifted_pivots = 0;
        let vals = factors.values_mut();
        for i in 0..n {
            let (s, e) = (offsets[i], offsets[i + 1]);
            for k in s..e {
                marker[cols[k]] = k;
            }
            for kk in s..diag_pos[i] {
                let k = cols[kk];
                let pivot = vals[diag_pos[k]];
                let lik = vals[kk] / pivot;
                vals[kk] = lik;
                for kj in diag_pos[k] + 1..offsets[k + 1] {
                    let pos = marker[cols[kj]];
                    if pos != usize::MAX {
                        vals[pos] -= lik * vals[kj];
                    }
                }
            }
            let d = &mut vals[diag_pos[i]];
            let threshold = PIVOT_SHIFT * row_max[i];
            if d.abs() <= threshold || *d == 0.0 {
                let shift = if row_max[i] > 0.0 { threshold } else { 1.0 };
                *d = if *d < 0.0 { *d - shift } else { *d + shift };
                shifted_pivots += 1;
            }
            for k in s..e {
                marker[cols[k]] = usize::MAX;
            }
        }
        if shifted_pivots > 0 {
            log::debug!("ILU(0): shifted {shifted_pivots} small pivots");
        }
        Ok(Self {
            factors,
            diag_pos,
            shifted_pivots,
        })
    }

    /// Number of pivots that had to be shifted away from zero.
    pub fn shifted_pivots(&self) -> usize {
        self.shifted_pivots
    }

    pub fn factors(&self) -> &CsrMatrix {
        &self.factors
    }

    /// Solves `L U z = r`.
    pub fn solve(&self, r: &[f64], z: &mut [f64]) {
        let n = self.diag_pos.len();
        let offsets = self.factors.row_offsets();
        let cols = self.factors.col_indices();
        let vals = self.factors.values();
        for i in 0..n {
            let (s, d) = (offsets[i], self.diag_pos[i]);
            z[i] = r[i] - row_dot(&cols[s..d], &vals[s..d], z);
        }
        for i in (0..n).rev() {
            let (d, e) = (self.diag_pos[i], offsets[i + 1]);
            z[i] = (z[i] - row_dot(&cols[d + 1..e], &vals[d + 1..e], z)) / vals[d];
        }
    }
}

impl Preconditioner for Ilu0 {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.solve(r, z);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense::DenseMatrix;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn tridiagonal_ilu_is_exact_lu() {
        let m = laplacian_1d(12);
        let ilu = Ilu0::factor(&m).unwrap();
        let (l, u) = DenseMatrix::from_csr(&m).lu_no_pivot();
        let f = ilu.factors().to_dense();
        for i in 0..12 {
            for j in 0..12 {
                let want = if j < i { l[i][j] } else { u[i][j] };
                assert!((f[i][j] - want).abs() < 1e-13, "({i},{j})");
            }
        }
        assert_eq!(ilu.shifted_pivots(), 0);
    }

    #[test]
    fn diagonal_and_identity() {
        let d = CsrMatrix::from_diagonal(&[2.0, 5.0, -3.0]);
        let ilu = Ilu0::factor(&d).unwrap();
        assert_eq!(ilu.factors().to_dense(), d.to_dense());
        let id = Ilu0::factor(&CsrMatrix::identity(4)).unwrap();
        assert_eq!(id.factors().to_dense(), CsrMatrix::identity(4).to_dense());
    }

    #[test]
    fn zero_pivot_is_shifted() {
        let m = CsrMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        // explicit zero diagonal needs to be in the pattern
        let m = m.linear_combination(1.0, &CsrMatrix::from_diagonal(&[0.0, 0.0]), 1.0);
        let ilu = Ilu0::factor(&m).unwrap();
        assert!(ilu.shifted_pivots() >= 1);
    }

    #[test]
    fn missing_diagonal_is_an_error() {
        let m = CsrMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(matches!(Ilu0::factor(&m), Err(Error::MissingDiagonal(0))));
    }
}
