//! Sparse linear algebra kernel.

mod csr;
pub mod dense;
mod ilu;
mod krylov;
mod lanczos;
pub mod matrix_market;
mod ordering;

pub use csr::{axpy, dot, lump_rows, norm2, CsrMatrix};
pub use ilu::Ilu0;
pub use krylov::{
    cg_solve, cg_solve_into, gmres_solve, gmres_solve_into, SolverReport, SolverSettings, DEFAULT_RESTART,
    DEFAULT_TOLERANCE,
};
pub use lanczos::lanczos_extreme_ritz;
pub use ordering::{invert_permutation, rcm_ordering};

/// Approximate inverse applied as `z = P^{-1} r`.
pub trait Preconditioner: Send + Sync {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

#[derive(Debug, Clone)]
pub struct JacobiPreconditioner {
    inv_diag: Vec<f64>,
}

impl JacobiPreconditioner {
    pub fn new(m: &CsrMatrix) -> Self {
        let inv_diag = m
            .diagonal()
            .into_iter()
            .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
            .collect();
        Self { inv_diag }
    }
}

impl Preconditioner for JacobiPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}
