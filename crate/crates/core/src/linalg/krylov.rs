//! Krylov solvers: preconditioned CG and restarted, right-preconditioned GMRES.

use serde::Serialize;

use super::csr::{axpy, dot, norm2, CsrMatrix};
use super::{IdentityPreconditioner, Preconditioner};
use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_RESTART: usize = 30;

/// Outcome of an iterative solve. `final_residual` is the relative true
/// residual `||b - M x|| / ||b||` recomputed at exit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tolerance: f64,
    pub restart: usize,
    /// `None` means `10 * n`.
    pub max_iter: Option<usize>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            restart: DEFAULT_RESTART,
            max_iter: None,
        }
    }
}

impl SolverSettings {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }

    fn max_iter_for(&self, n: usize) -> usize {
        self.max_iter.unwrap_or(10 * n.max(1))
    }
}

fn residual(m: &CsrMatrix, b: &[f64], x: &[f64], r: &mut [f64]) -> f64 {
    m.spmv_into(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    norm2(r)
}

/// Conjugate gradients for SPD systems, starting from the contents of `x`.
pub fn cg_solve_into(
    m: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    settings: &SolverSettings,
    precond: Option<&dyn Preconditioner>,
) -> Result<SolverReport> {
    let n = b.len();
    if m.n_rows() != n || m.n_cols() != n || x.len() != n {
        return Err(Error::Dimension("CG: matrix, rhs and solution sizes differ".into()));
    }
    let identity = IdentityPreconditioner;
    let precond = precond.unwrap_or(&identity);
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolverReport {
            iterations: 0,
            final_residual: 0.0,
            converged: true,
        });
    }
    let max_iter = settings.max_iter_for(n);
    let target = settings.tolerance * bnorm;

    let mut r = vec![0.0; n];
    let mut rnorm = residual(m, b, x, &mut r);
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut iterations = 0;
    while rnorm > target && iterations < max_iter {
        m.spmv_into(&p, &mut q);
        let curvature = dot(&p, &q);
        if curvature <= 0.0 || !curvature.is_finite() {
            return Err(Error::NotPositiveDefinite {
                iteration: iterations,
                curvature,
            });
        }
        let alpha = rz / curvature;
        axpy(alpha, &p, x);
        axpy(-alpha, &q, &mut r);
        iterations += 1;
        rnorm = norm2(&r);
        if rnorm <= target {
            break;
        }
        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    let true_norm = residual(m, b, x, &mut r);
    Ok(SolverReport {
        iterations,
        final_residual: true_norm / bnorm,
        converged: true_norm <= target,
    })
}

/// CG from a zero initial guess.
pub fn cg_solve(
    m: &CsrMatrix,
    b: &[f64],
    settings: &SolverSettings,
    precond: Option<&dyn Preconditioner>,
) -> Result<(Vec<f64>, SolverReport)> {
    let mut x = vec![0.0; b.len()];
    let report = cg_solve_into(m, b, &mut x, settings, precond)?;
    Ok((x, report))
}

/// Restarted GMRES(m) with right preconditioning, starting from `x`.
///
/// Right preconditioning keeps the monitored residual equal to the true
/// residual of the unpreconditioned system.
pub fn gmres_solve_into(
    m: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    settings: &SolverSettings,
    precond: Option<&dyn Preconditioner>,
) -> Result<SolverReport> {
    let n = b.len();
    if m.n_rows() != n || m.n_cols() != n || x.len() != n {
        return Err(Error::Dimension("GMRES: matrix, rhs and solution sizes differ".into()));
    }
    let identity = IdentityPreconditioner;
    let precond = precond.unwrap_or(&identity);
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolverReport {
            iterations: 0,
            final_residual: 0.0,
            converged: true,
        });
    }
    let restart = settings.restart.clamp(1, n.max(1));
    let max_iter = settings.max_iter_for(n);
    let target = settings.tolerance * bnorm;

    let mut r = vec![0.0; n];
    let mut beta = residual(m, b, x, &mut r);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(restart + 1);
    let mut zs: Vec<Vec<f64>> = Vec::with_capacity(restart);
    let mut spare: Vec<Vec<f64>> = Vec::with_capacity(restart);
    // Hessenberg stored column-wise, already rotated.
    let mut h = vec![vec![0.0; restart + 1]; restart];
    let mut cs = vec![0.0; restart];
    let mut sn = vec![0.0; restart];
    let mut g = vec![0.0; restart + 1];
    let mut w = vec![0.0; n];
    let mut iterations = 0;

    while beta > target && iterations < max_iter {
        basis.clear();
        spare.append(&mut zs);
        basis.push(r.iter().map(|v| v / beta).collect());
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;
        let mut k = 0;
        while k < restart && iterations < max_iter {
            let mut z = spare.pop().unwrap_or_else(|| vec![0.0; n]);
            precond.apply(&basis[k], &mut z);
            m.spmv_into(&z, &mut w);
            zs.push(z);
            // modified Gram-Schmidt
            for (i, v) in basis.iter().enumerate() {
                let hik = dot(&w, v);
                h[k][i] = hik;
                axpy(-hik, v, &mut w);
            }
            let hnext = norm2(&w);
            h[k][k + 1] = hnext;
            for i in 0..k {
                let (a, bb) = (h[k][i], h[k][i + 1]);
                h[k][i] = cs[i] * a + sn[i] * bb;
                h[k][i + 1] = -sn[i] * a + cs[i] * bb;
            }
            let (a, bb) = (h[k][k], h[k][k + 1]);
            let denom = a.hypot(bb);
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = a / denom;
                sn[k] = bb / denom;
            }
            h[k][k] = cs[k] * a + sn[k] * bb;
            h[k][k + 1] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            iterations += 1;
            k += 1;
            let lucky = hnext <= 1e-14 * beta;
            if lucky || g[k].abs() <= target {
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
        }
        // back substitution on the rotated Hessenberg system
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for j in i + 1..k {
                acc -= h[j][i] * y[j];
            }
            y[i] = if h[i][i] != 0.0 { acc / h[i][i] } else { 0.0 };
        }
        for (yi, z) in y.iter().zip(&zs) {
            axpy(*yi, z, x);
        }
        let previous = beta;
        beta = residual(m, b, x, &mut r);
        if !beta.is_finite() {
            break;
        }
        if beta >= previous && k < restart {
            // breakdown without progress: nothing more to gain from this Krylov space
            break;
        }
    }
    Ok(SolverReport {
        iterations,
        final_residual: beta / bnorm,
        converged: beta <= target,
    })
}

/// GMRES from a zero initial guess.
pub fn gmres_solve(
    m: &CsrMatrix,
    b: &[f64],
    settings: &SolverSettings,
    precond: Option<&dyn Preconditioner>,
) -> Result<(Vec<f64>, SolverReport)> {
    let mut x = vec![0.0; b.len()];
    let report = gmres_solve_into(m, b, &mut x, settings, precond)?;
    Ok((x, report))
}
