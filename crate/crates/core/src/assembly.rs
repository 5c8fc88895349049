//! Bilinear and linear forms, assembled into CSR matrices, and Dirichlet elimination.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{matrix_market, CsrMatrix};
use crate::mesh::{CellGeometry, Mesh, Point};
use crate::spaces::{quadrature, DofHandler, SpaceKind, Tabulation};

/// Quadrature degree for the elastic form.
pub const DEGREE_ELASTIC: usize = 4;
/// Quadrature degree for the mixed coupling forms.
pub const DEGREE_COUPLING: usize = 3;
/// Quadrature degree for P1 x P1 forms.
pub const DEGREE_PRESSURE: usize = 2;
/// Quadrature degree for the load; sources need not be polynomial.
pub const DEGREE_LOAD: usize = 4;

/// Material coefficients, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub mu: f64,
    pub lambda: f64,
    /// Storage coefficient `1/M`.
    pub storage: f64,
    pub permeability: f64,
    pub fluid_viscosity: f64,
    /// Coupling in the displacement equation.
    pub alpha_grad: f64,
    /// Coupling in the storage (time derivative) term.
    pub alpha_div: f64,
}

impl MaterialParams {
    /// Drained constrained modulus.
    pub fn k_dr(&self) -> f64 {
        self.lambda + 2.0 * self.mu
    }

    pub fn mobility(&self) -> f64 {
        self.permeability / self.fluid_viscosity
    }

    /// Lame parameters from Young's modulus and Poisson's ratio.
    pub fn lame_from_young(e: f64, nu: f64) -> (f64, f64) {
        let mu = e / (2.0 * (1.0 + nu));
        let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        (mu, lambda)
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.mu > 0.0, "mu must be positive"),
            (self.lambda >= 0.0, "lambda must be non-negative"),
            (self.storage > 0.0, "storage must be positive"),
            (self.permeability > 0.0, "permeability must be positive"),
            (self.fluid_viscosity > 0.0, "fluid viscosity must be positive"),
            (
                self.alpha_grad.is_finite() && self.alpha_div.is_finite(),
                "coupling coefficients must be finite",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config((*msg).into())),
            None => Ok(()),
        }
    }
}

/// Cell-wise constant coefficients.
pub trait CellCoefficients {
    fn at(&self, cell: usize) -> &MaterialParams;
}

impl CellCoefficients for MaterialParams {
    fn at(&self, _cell: usize) -> &MaterialParams {
        self
    }
}

impl CellCoefficients for [MaterialParams] {
    fn at(&self, cell: usize) -> &MaterialParams {
        &self[cell]
    }
}

impl CellCoefficients for Vec<MaterialParams> {
    fn at(&self, cell: usize) -> &MaterialParams {
        &self[cell]
    }
}

/// The five assembled operators, without boundary conditions.
#[derive(Debug, Clone)]
pub struct FormMatrices {
    pub a: CsrMatrix,
    pub g: CsrMatrix,
    pub d: CsrMatrix,
    pub c: CsrMatrix,
    pub b: CsrMatrix,
}

impl FormMatrices {
    pub fn assemble<M: CellCoefficients + ?Sized>(
        mesh: &Mesh,
        dofs_u: &DofHandler,
        dofs_p: &DofHandler,
        params: &M,
    ) -> Result<Self> {
        Ok(Self {
            a: assemble_elastic_stiffness(mesh, dofs_u, params)?,
            g: assemble_coupling_g(mesh, dofs_u, dofs_p, params)?,
            d: assemble_coupling_d(mesh, dofs_u, dofs_p, params)?,
            c: assemble_storage_mass(mesh, dofs_p, params)?,
            b: assemble_pressure_stiffness(mesh, dofs_p, params)?,
        })
    }

    /// Writes `A.mtx`, `G.mtx`, `D.mtx`, `C.mtx`, `B.mtx` into `dir`.
    pub fn dump_matrix_market(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, m) in [
            ("A", &self.a),
            ("G", &self.g),
            ("D", &self.d),
            ("C", &self.c),
            ("B", &self.b),
        ] {
            matrix_market::write(m, &dir.join(format!("{name}.mtx")))?;
        }
        Ok(())
    }
}

/// Zero matrix on the pattern induced by cell-local coupling.
pub fn sparsity_pattern(rows: &DofHandler, cols: &DofHandler) -> CsrMatrix {
    let mut pattern: Vec<Vec<usize>> = vec![Vec::new(); rows.n_dofs()];
    for cell in 0..rows.n_cells() {
        let cd = cols.cell_dofs(cell);
        for &r in rows.cell_dofs(cell) {
            pattern[r].extend_from_slice(cd);
        }
    }
    CsrMatrix::from_pattern(cols.n_dofs(), pattern)
}

fn check_handlers(mesh: &Mesh, handlers: &[(&DofHandler, SpaceKind)]) -> Result<()> {
    for (h, kind) in handlers {
        if h.kind() != *kind {
            return Err(Error::Dimension(format!(
                "expected a {kind:?} dof handler, got {:?}",
                h.kind()
            )));
        }
        if h.n_cells() != mesh.n_cells() {
            return Err(Error::Dimension("dof handler was built on a different mesh".into()));
        }
    }
    Ok(())
}

/// Generic cell loop: `local(geom, cell, out)` fills a row-major local matrix.
fn assemble_matrix(
    mesh: &Mesh,
    rows: &DofHandler,
    cols: &DofHandler,
    mut local: impl FnMut(&CellGeometry, usize, &mut [f64]),
) -> Result<CsrMatrix> {
    let mut m = sparsity_pattern(rows, cols);
    let (nr, nc) = (rows.kind().dofs_per_cell(), cols.kind().dofs_per_cell());
    let mut buf = vec![0.0; nr * nc];
    for cell in 0..mesh.n_cells() {
        let geom = mesh.cell_geometry(cell)?;
        buf.iter_mut().for_each(|v| *v = 0.0);
        local(&geom, cell, &mut buf);
        let (rd, cd) = (rows.cell_dofs(cell), cols.cell_dofs(cell));
        for (i, &r) in rd.iter().enumerate() {
            for (j, &c) in cd.iter().enumerate() {
                let inserted = m.add_to(r, c, buf[i * nc + j]);
                debug_assert!(inserted);
            }
        }
    }
    Ok(m)
}

fn physical_gradients(geom: &CellGeometry, tab: &Tabulation, q: usize) -> Vec<[f64; 2]> {
    tab.gradients[q].iter().map(|g| geom.push_gradient(*g)).collect()
}

/// `A_ij = ∫ 2μ ε(φ_j):ε(φ_i) + λ div φ_j div φ_i`.
pub fn assemble_elastic_stiffness<M: CellCoefficients + ?Sized>(
    mesh: &Mesh,
    dofs_u: &DofHandler,
    params: &M,
) -> Result<CsrMatrix> {
    check_handlers(mesh, &[(dofs_u, SpaceKind::P2Vector)])?;
    let tab = Tabulation::new(SpaceKind::P2Vector, quadrature(DEGREE_ELASTIC)?);
    assemble_matrix(mesh, dofs_u, dofs_u, |geom, cell, out| {
        let p = params.at(cell);
        for (q, w) in tab.rule.weights.iter().enumerate() {
            let dx = w * geom.det;
            let g = physical_gradients(geom, &tab, q);
            for (i, gi) in g.iter().enumerate() {
                for (j, gj) in g.iter().enumerate() {
                    let dot = gi[0] * gj[0] + gi[1] * gj[1];
                    for ci in 0..2 {
                        for cj in 0..2 {
                            let delta = if ci == cj { dot } else { 0.0 };
                            let v = p.mu * (delta + gi[cj] * gj[ci]) + p.lambda * gi[ci] * gj[cj];
                            out[(2 * i + ci) * 12 + 2 * j + cj] += v * dx;
                        }
                    }
                }
            }
        }
    })
}

/// `G_ij = ∫ α_grad ∂ψ_j/∂x_c φ_i` with `c` the component of dof `i`.
pub fn assemble_coupling_g<M: CellCoefficients + ?Sized>(
    mesh: &Mesh,
    dofs_u: &DofHandler,
    dofs_p: &DofHandler,
    params: &M,
) -> Result<CsrMatrix> {
    assemble_gradient(mesh, dofs_u, dofs_p, |cell| params.at(cell).alpha_grad)
}

/// `D_ij = ∫ α_div div φ_j ψ_i`.
pub fn assemble_coupling_d<M: CellCoefficients + ?Sized>(
    mesh: &Mesh,
    dofs_u: &DofHandler,
    dofs_p: &DofHandler,
    params: &M,
) -> Result<CsrMatrix> {
    assemble_divergence(mesh, dofs_u, dofs_p, |cell| params.at(cell).alpha_div)
}

pub(crate) fn assemble_gradient(
    mesh: &Mesh,
    dofs_u: &DofHandler,
    dofs_p: &DofHandler,
    coef: impl Fn(usize) -> f64,
) -> Result<CsrMatrix> {
    check_handlers(mesh, &[(dofs_u, SpaceKind::P2Vector), (dofs_p, SpaceKind::P1Scalar)])?;
    let tu = Tabulation::new(SpaceKind::P2Vector, quadrature(DEGREE_COUPLING)?);
    let tp = Tabulation::new(SpaceKind::P1Scalar, quadrature(DEGREE_COUPLING)?);
    assemble_matrix(mesh, dofs_u, dofs_p, |geom, cell, out| {
        let a = coef(cell);
        for (q, w) in tu.rule.weights.iter().enumerate() {
            let dx = a * w * geom.det;
            let gp = physical_gradients(geom, &tp, q);
            for (i, ni) in tu.values[q].iter().enumerate() {
                for (j, gj) in gp.iter().enumerate() {
                    for c in 0..2 {
                        out[(2 * i + c) * 3 + j] += gj[c] * ni * dx;
                    }
                }
            }
        }
    })
}

pub(crate) fn assemble_divergence(
    mesh: &Mesh,
    dofs_u: &DofHandler,
    dofs_p: &DofHandler,
    coef: impl Fn(usize) -> f64,
) -> Result<CsrMatrix> {
    check_handlers(mesh, &[(dofs_u, SpaceKind::P2Vector), (dofs_p, SpaceKind::P1Scalar)])?;
    let tu = Tabulation::new(SpaceKind::P2Vector, quadrature(DEGREE_COUPLING)?);
    let tp = Tabulation::new(SpaceKind::P1Scalar, quadrature(DEGREE_COUPLING)?);
    assemble_matrix(mesh, dofs_p, dofs_u, |geom, cell, out| {
        let a = coef(cell);
        for (q, w) in tu.rule.weights.iter().enumerate() {
            let dx = a * w * geom.det;
            let gu = physical_gradients(geom, &tu, q);
            for (i, psi) in tp.values[q].iter().enumerate() {
                for (j, gj) in gu.iter().enumerate() {
                    for c in 0..2 {
                        out[i * 12 + 2 * j + c] += gj[c] * psi * dx;
                    }
                }
            }
        }
    })
}

/// `C_ij = ∫ S ψ_j ψ_i`.
pub fn assemble_storage_mass<M: CellCoefficients + ?Sized>(
    mesh: &Mesh,
    dofs_p: &DofHandler,
    params: &M,
) -> Result<CsrMatrix> {
    assemble_weighted_mass(mesh, dofs_p, |cell| params.at(cell).storage)
}

/// P1 mass matrix with a cell-wise weight.
pub fn assemble_weighted_mass(mesh: &Mesh, dofs_p: &DofHandler, weight: impl Fn(usize) -> f64) -> Result<CsrMatrix> {
    check_handlers(mesh, &[(dofs_p, SpaceKind::P1Scalar)])?;
    let tab = Tabulation::new(SpaceKind::P1Scalar, quadrature(DEGREE_PRESSURE)?);
    assemble_matrix(mesh, dofs_p, dofs_p, |geom, cell, out| {
        let s = weight(cell);
        for (q, w) in tab.rule.weights.iter().enumerate() {
            let dx = s * w * geom.det;
            let v = &tab.values[q];
            for i in 0..3 {
                for j in 0..3 {
                    out[i * 3 + j] += v[i] * v[j] * dx;
                }
            }
        }
    })
}

/// `B_ij = ∫ (k/ν) ∇ψ_j·∇ψ_i`.
pub fn assemble_pressure_stiffness<M: CellCoefficients + ?Sized>(
    mesh: &Mesh,
    dofs_p: &DofHandler,
    params: &M,
) -> Result<CsrMatrix> {
    check_handlers(mesh, &[(dofs_p, SpaceKind::P1Scalar)])?;
    let tab = Tabulation::new(SpaceKind::P1Scalar, quadrature(DEGREE_PRESSURE)?);
    assemble_matrix(mesh, dofs_p, dofs_p, |geom, cell, out| {
        let k = params.at(cell).mobility();
        for (q, w) in tab.rule.weights.iter().enumerate() {
            let dx = k * w * geom.det;
            let g = physical_gradients(geom, &tab, q);
            for i in 0..3 {
                for j in 0..3 {
                    out[i * 3 + j] += (g[i][0] * g[j][0] + g[i][1] * g[j][1]) * dx;
                }
            }
        }
    })
}

/// `l_i = ∫ f(x, t) ψ_i`.
pub fn assemble_load(mesh: &Mesh, dofs_p: &DofHandler, f: impl Fn(Point, f64) -> f64, t: f64) -> Result<Vec<f64>> {
    check_handlers(mesh, &[(dofs_p, SpaceKind::P1Scalar)])?;
    let tab = Tabulation::new(SpaceKind::P1Scalar, quadrature(DEGREE_LOAD)?);
    let mut out = vec![0.0; dofs_p.n_dofs()];
    for cell in 0..mesh.n_cells() {
        let geom = mesh.cell_geometry(cell)?;
        let dofs = dofs_p.cell_dofs(cell);
        for (q, (xi, w)) in tab.rule.points.iter().zip(&tab.rule.weights).enumerate() {
            let fx = f(geom.map(xi[0], xi[1]), t) * w * geom.det;
            for (i, &d) in dofs.iter().enumerate() {
                out[d] += tab.values[q][i] * fx;
            }
        }
    }
    Ok(out)
}

/// Dirichlet constraints, sorted by dof with unique dofs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Constraints {
    dofs: Vec<usize>,
    values: Vec<f64>,
}

impl Constraints {
    /// Repeated dofs must carry equal values.
    pub fn new(mut pairs: Vec<(usize, f64)>) -> Result<Self> {
        pairs.sort_by_key(|p| p.0);
        let mut dofs: Vec<usize> = Vec::with_capacity(pairs.len());
        let mut values: Vec<f64> = Vec::with_capacity(pairs.len());
        for (d, v) in pairs {
            if dofs.last() == Some(&d) {
                let first = *values.last().unwrap();
                if first != v {
                    return Err(Error::ConflictingConstraint {
                        dof: d,
                        first,
                        second: v,
                    });
                }
                continue;
            }
            dofs.push(d);
            values.push(v);
        }
        Ok(Self { dofs, values })
    }

    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        self.dofs.iter().for_each(|&d| m[d] = true);
        m
    }

    /// Overwrites constrained entries of `x`.
    pub fn impose(&self, x: &mut [f64]) {
        for (&d, &v) in self.dofs.iter().zip(&self.values) {
            x[d] = v;
        }
    }

    /// Same dofs shifted by `offset` (for block vectors).
    pub fn shifted(&self, offset: usize) -> Self {
        Self {
            dofs: self.dofs.iter().map(|d| d + offset).collect(),
            values: self.values.clone(),
        }
    }

    /// Union of two constraint sets.
    pub fn merged(&self, other: &Constraints) -> Result<Self> {
        let pairs = self
            .dofs
            .iter()
            .zip(&self.values)
            .chain(other.dofs.iter().zip(&other.values))
            .map(|(&d, &v)| (d, v))
            .collect();
        Self::new(pairs)
    }
}

/// Zeros constrained rows and columns and puts 1 on their diagonal.
/// The diagonal must be present in the pattern of every constrained row.
pub fn eliminate(m: &CsrMatrix, constrained: &[bool]) -> Result<CsrMatrix> {
    let mut out = m.clone();
    let offsets = m.row_offsets().to_vec();
    let cols = m.col_indices().to_vec();
    let vals = out.values_mut();
    for i in 0..m.n_rows() {
        let mut has_diag = false;
        for k in offsets[i]..offsets[i + 1] {
            let j = cols[k];
            if constrained[i] || constrained[j] {
                vals[k] = 0.0;
            }
            if i == j && constrained[i] {
                vals[k] = 1.0;
                has_diag = true;
            }
        }
        if constrained[i] && !has_diag {
            return Err(Error::MissingDiagonal(i));
        }
    }
    Ok(out)
}

/// Symmetric elimination of Dirichlet constraints in `m x = rhs`.
///
/// Known values move to the right-hand side, constrained rows and columns
/// become identity rows, and the constrained rhs entries become the values.
pub fn apply_dirichlet(m: &CsrMatrix, rhs: &[f64], constraints: &Constraints) -> Result<(CsrMatrix, Vec<f64>)> {
    let n = m.n_rows();
    if m.n_cols() != n || rhs.len() != n {
        return Err(Error::Dimension("apply_dirichlet needs a square system".into()));
    }
    if constraints.dofs.last().is_some_and(|&d| d >= n) {
        return Err(Error::Dimension("constrained dof out of range".into()));
    }
    let mask = constraints.mask(n);
    let mut g = vec![0.0; n];
    constraints.impose(&mut g);
    let mut b = rhs.to_vec();
    m.spmv_add(-1.0, &g, &mut b);
    constraints.impose(&mut b);
    Ok((eliminate(m, &mask)?, b))
}
