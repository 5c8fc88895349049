//! Brute-force global assembly that shares nothing with the library: monomial-fitted P2/P1 bases on physical cells, a
//! collapsed tensor Gauss rule, and dofs found by coordinate lookup.

use biot_core::assembly::{assemble_load, FormMatrices, MaterialParams};
use biot_core::mesh::{structured_rectangle, Mesh};
use biot_core::spaces::{build_dof_handler, DofHandler, SpaceKind};

type Dense = Vec<Vec<f64>>;

/// Gauss-Legendre on [0, 1] by Newton iteration on the Legendre recurrence.
fn gauss_01(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|k| {
            let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for m in 2..=n {
                    let p2 = ((2 * m - 1) as f64 * x * p1 - (m - 1) as f64 * p0) / m as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            (0.5 * (x + 1.0), 0.5 * w)
        })
        .collect()
}

/// Points and weights on a physical triangle; exact well past degree 8.
fn triangle_rule(v: [[f64; 2]; 3]) -> Vec<([f64; 2], f64)> {
    let g = gauss_01(6);
    let det = ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1])).abs();
    let mut out = Vec::new();
    for &(a, wa) in &g {
        for &(b, wb) in &g {
            let (s, t) = (a, b * (1.0 - a));
            let x = [
                v[0][0] + s * (v[1][0] - v[0][0]) + t * (v[2][0] - v[0][0]),
                v[0][1] + s * (v[1][1] - v[0][1]) + t * (v[2][1] - v[0][1]),
            ];
            out.push((x, wa * wb * (1.0 - a) * det));
        }
    }
    out
}

fn gauss_solve(mut m: Dense, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (rhs[i] - s) / m[i][i];
    }
    x
}

/// Lagrange basis at `nodes` in the monomial space with the given
/// exponents. Returns coefficient vectors, one per node.
fn lagrange(nodes: &[[f64; 2]], exps: &[(i32, i32)], center: [f64; 2]) -> Vec<Vec<f64>> {
    let vander: Dense = nodes
        .iter()
        .map(|x| {
            exps.iter()
                .map(|&(a, b)| (x[0] - center[0]).powi(a) * (x[1] - center[1]).powi(b))
                .collect()
        })
        .collect();
    (0..nodes.len())
        .map(|k| {
            let mut e = vec![0.0; nodes.len()];
            e[k] = 1.0;
            gauss_solve(vander.clone(), e)
        })
        .collect()
}

/// Value and gradient of a monomial expansion.
fn eval(coef: &[f64], exps: &[(i32, i32)], center: [f64; 2], x: [f64; 2]) -> (f64, [f64; 2]) {
    let (dx, dy) = (x[0] - center[0], x[1] - center[1]);
    let mut v = 0.0;
    let mut g = [0.0; 2];
    for (c, &(a, b)) in coef.iter().zip(exps) {
        v += c * dx.powi(a) * dy.powi(b);
        if a > 0 {
            g[0] += c * a as f64 * dx.powi(a - 1) * dy.powi(b);
        }
        if b > 0 {
            g[1] += c * b as f64 * dx.powi(a) * dy.powi(b - 1);
        }
    }
    (v, g)
}

const P1: [(i32, i32); 3] = [(0, 0), (1, 0), (0, 1)];
const P2: [(i32, i32); 6] = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)];

fn find_point(dofs: &DofHandler, x: [f64; 2]) -> usize {
    let hits: Vec<usize> = dofs
        .points()
        .iter()
        .enumerate()
        .filter(|(_, p)| (p[0] - x[0]).abs() < 1e-12 && (p[1] - x[1]).abs() < 1e-12)
        .map(|(i, _)| i)
        .collect();
    assert_eq!(hits.len(), 1, "node {x:?}");
    hits[0]
}

pub struct Oracle {
    pub a: Dense,
    pub g: Dense,
    pub d: Dense,
    pub c: Dense,
    pub b: Dense,
    pub load: Vec<f64>,
}

pub fn brute_force(
    mesh: &Mesh,
    du: &DofHandler,
    dp: &DofHandler,
    mats: &[MaterialParams],
    f: impl Fn([f64; 2]) -> f64,
) -> Oracle {
    let (nu, np) = (du.n_dofs(), dp.n_dofs());
    let mut o = Oracle {
        a: vec![vec![0.0; nu]; nu],
        g: vec![vec![0.0; np]; nu],
        d: vec![vec![0.0; nu]; np],
        c: vec![vec![0.0; np]; np],
        b: vec![vec![0.0; np]; np],
        load: vec![0.0; np],
    };
    for (cell, tri) in mesh.cells().iter().enumerate() {
        let m = &mats[cell];
        let v = tri.map(|k| mesh.vertices()[k]);
        let center = [(v[0][0] + v[1][0] + v[2][0]) / 3.0, (v[0][1] + v[1][1] + v[2][1]) / 3.0];
        let mid = |a: usize, b: usize| [0.5 * (v[a][0] + v[b][0]), 0.5 * (v[a][1] + v[b][1])];
        let nodes2 = [v[0], v[1], v[2], mid(0, 1), mid(1, 2), mid(0, 2)];
        let c2 = lagrange(&nodes2, &P2, center);
        let c1 = lagrange(&v, &P1, center);
        let pts2: Vec<usize> = nodes2.iter().map(|&x| find_point(du, x)).collect();
        let pts1: Vec<usize> = v.iter().map(|&x| find_point(dp, x)).collect();
        for (x, w) in triangle_rule(v) {
            let phi: Vec<(f64, [f64; 2])> = c2.iter().map(|c| eval(c, &P2, center, x)).collect();
            let psi: Vec<(f64, [f64; 2])> = c1.iter().map(|c| eval(c, &P1, center, x)).collect();
            // vector basis: (node, component) -> gradient tensor rows
            let vec_basis = |k: usize, comp: usize| -> [[f64; 2]; 2] {
                let mut gr = [[0.0; 2]; 2];
                gr[comp] = phi[k].1;
                gr
            };
            for (i, &pi) in pts2.iter().enumerate() {
                for ci in 0..2 {
                    let gi = vec_basis(i, ci);
                    let row = 2 * pi + ci;
                    for (j, &pj) in pts2.iter().enumerate() {
                        for cj in 0..2 {
                            let gj = vec_basis(j, cj);
                            let mut eps = 0.0;
                            for r in 0..2 {
                                for s in 0..2 {
                                    let ei = 0.5 * (gi[r][s] + gi[s][r]);
                                    let ej = 0.5 * (gj[r][s] + gj[s][r]);
                                    eps += ei * ej;
                                }
                            }
                            let divs = (gi[0][0] + gi[1][1]) * (gj[0][0] + gj[1][1]);
                            o.a[row][2 * pj + cj] += w * (2.0 * m.mu * eps + m.lambda * divs);
                        }
                    }
                    for (j, &qj) in pts1.iter().enumerate() {
                        o.g[row][qj] += w * m.alpha_grad * psi[j].1[ci] * phi[i].0;
                        o.d[qj][row] += w * m.alpha_div * (gi[0][0] + gi[1][1]) * psi[j].0;
                    }
                }
            }
            let fx = f(x);
            for (i, &qi) in pts1.iter().enumerate() {
                o.load[qi] += w * fx * psi[i].0;
                for (j, &qj) in pts1.iter().enumerate() {
                    o.c[qi][qj] += w * m.storage * psi[i].0 * psi[j].0;
                    let dot = psi[i].1[0] * psi[j].1[0] + psi[i].1[1] * psi[j].1[1];
                    o.b[qi][qj] += w * m.permeability / m.fluid_viscosity * dot;
                }
            }
        }
    }
    o
}

/// Structured mesh with interior vertices moved off the grid.
pub fn distorted_mesh(nx: usize, ny: usize) -> Mesh {
    let base = structured_rectangle(nx, ny, 2.0, 1.5);
    let (lo, hi) = base.bounding_box();
    let vertices: Vec<[f64; 2]> = base
        .vertices()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let interior = p[0] > lo[0] && p[0] < hi[0] && p[1] > lo[1] && p[1] < hi[1];
            if interior {
                let s = i as f64;
                [p[0] + 0.09 * (1.7 * s).sin(), p[1] + 0.07 * (2.3 * s).cos()]
            } else {
                *p
            }
        })
        .collect();
    Mesh::new(vertices, base.cells().to_vec(), base.boundary_facets().to_vec()).unwrap()
}

pub fn materials(n: usize) -> Vec<MaterialParams> {
    (0..n)
        .map(|c| {
            let s = c as f64;
            MaterialParams {
                mu: 1.0 + 0.3 * s.sin().abs(),
                lambda: 2.0 + 0.5 * (0.7 * s).cos(),
                storage: 0.1 + 0.05 * (1.3 * s).sin().abs(),
                permeability: 0.5 + 0.2 * (0.4 * s).cos(),
                fluid_viscosity: 1.5,
                alpha_grad: 0.9,
                alpha_div: 0.6 + 0.01 * s,
            }
        })
        .collect()
}

fn max_abs(m: &Dense) -> f64 {
    m.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs()))
}

/// Max entry error relative to the largest oracle entry.
pub fn relative_error(got: &Dense, want: &Dense) -> f64 {
    let err = got
        .iter()
        .flatten()
        .zip(want.iter().flatten())
        .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
    err / max_abs(want)
}

/// Relative errors of every assembled operator and the load vector.
pub fn form_errors(mesh: &Mesh) -> Vec<(&'static str, f64)> {
    assert!(mesh.n_cells() <= 50);
    let du = build_dof_handler(mesh, SpaceKind::P2Vector);
    let dp = build_dof_handler(mesh, SpaceKind::P1Scalar);
    let mats = materials(mesh.n_cells());
    // degree 3 source times P1 stays within the library's load rule
    let f = |x: [f64; 2], t: f64| x[0].powi(3) - 2.0 * x[0] * x[1] * x[1] + t * x[1] + 1.0;
    let oracle = brute_force(mesh, &du, &dp, &mats, |x| f(x, 0.4));
    let forms = FormMatrices::assemble(mesh, &du, &dp, &mats).unwrap();
    let load = assemble_load(mesh, &dp, f, 0.4).unwrap();
    vec![
        ("A", relative_error(&forms.a.to_dense(), &oracle.a)),
        ("G", relative_error(&forms.g.to_dense(), &oracle.g)),
        ("D", relative_error(&forms.d.to_dense(), &oracle.d)),
        ("C", relative_error(&forms.c.to_dense(), &oracle.c)),
        ("B", relative_error(&forms.b.to_dense(), &oracle.b)),
        ("load", relative_error(&vec![load], &vec![oracle.load])),
    ]
}

/// Meshes the oracle is run on.
pub fn oracle_meshes() -> Vec<(&'static str, Mesh)> {
    vec![
        ("structured", structured_rectangle(3, 2, 1.0, 1.0)),
        ("distorted", distorted_mesh(5, 4)),
    ]
}
