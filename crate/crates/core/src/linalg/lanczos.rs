use super::csr::{axpy, dot, norm2, CsrMatrix};

/// Smallest and largest Ritz values of a symmetric matrix after `iterations`
/// Lanczos steps with full reorthogonalization.
///
/// The start vector is a fixed pseudo-random sequence, so results are deterministic.
pub fn lanczos_extreme_ritz(m: &CsrMatrix, iterations: usize) -> (f64, f64) {
    let n = m.n_rows();
    assert_eq!(n, m.n_cols(), "Lanczos needs a square matrix");
    if n == 0 {
        return (0.0, 0.0);
    }
    let k = iterations.clamp(1, n);
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
        .collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    let (mut alpha, mut beta): (Vec<f64>, Vec<f64>) = (Vec::with_capacity(k), Vec::with_capacity(k));
    let mut w = vec![0.0; n];
    for j in 0..k {
        m.spmv_into(&v, &mut w);
        let a = dot(&w, &v);
        alpha.push(a);
        axpy(-a, &v, &mut w);
        if let Some(prev) = basis.last() {
            axpy(-beta[j - 1], prev, &mut w);
        }
        basis.push(v.clone());
        for q in &basis {
            let c = dot(&w, q);
            axpy(-c, q, &mut w);
        }
        let b = norm2(&w);
        if j + 1 == k || b <= 1e-14 * a.abs().max(1e-300) {
            break;
        }
        beta.push(b);
        v = w.iter().map(|x| x / b).collect();
    }
    let off = &beta[..alpha.len() - 1];
    (
        tridiagonal_eigenvalue(&alpha, off, 0),
        tridiagonal_eigenvalue(&alpha, off, alpha.len() - 1),
    )
}

/// Number of eigenvalues of the symmetric tridiagonal matrix below `x` (Sturm count).
fn count_below(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..diag.len() {
        let b2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        q = diag[i] - x - if i == 0 { 0.0 } else { b2 / q };
        if q == 0.0 {
            q = -f64::EPSILON * (diag[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// `index`-th smallest eigenvalue by bisection.
fn tridiagonal_eigenvalue(diag: &[f64], off: &[f64], index: usize) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..diag.len() {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i < off.len() { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(diag, off, mid) > index {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}
