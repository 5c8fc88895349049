//! Lagrange elements (P1 scalar, P2 vector), dof maps and triangle quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{BoundaryEntities, Mesh, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpaceKind {
    P1Scalar,
    P2Vector,
}

impl SpaceKind {
    /// Number of scalar shape functions per cell.
    pub fn n_shape(self) -> usize {
        match self {
            SpaceKind::P1Scalar => 3,
            SpaceKind::P2Vector => 6,
        }
    }

    pub fn n_components(self) -> usize {
        match self {
            SpaceKind::P1Scalar => 1,
            SpaceKind::P2Vector => 2,
        }
    }

    pub fn dofs_per_cell(self) -> usize {
        self.n_shape() * self.n_components()
    }
}

/// Points in reference coordinates `(xi, eta)`; weights sum to 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub degree: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn from_barycentric(degree: usize, pts: &[([f64; 3], f64)]) -> Self {
        Self {
            degree,
            points: pts.iter().map(|(l, _)| [l[1], l[2]]).collect(),
            weights: pts.iter().map(|(_, w)| *w).collect(),
        }
    }
}

/// Symmetric rule exact for polynomials of total degree `degree` (1..=4).
pub fn quadrature(degree: usize) -> Result<QuadratureRule> {
    let third = 1.0 / 3.0;
    let rule = match degree {
        1 => QuadratureRule::from_barycentric(1, &[([third; 3], 0.5)]),
        2 => {
            let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
            let w = 1.0 / 6.0;
            QuadratureRule::from_barycentric(2, &[([a, b, b], w), ([b, a, b], w), ([b, b, a], w)])
        }
        3 => {
            // Strang-Fix six-point rule
            let (a, b, c) = (0.659027622374092, 0.231933368553031, 0.109039009072877);
            let w = 1.0 / 12.0;
            let pts: Vec<([f64; 3], f64)> = [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]]
                .into_iter()
                .map(|l| (l, w))
                .collect();
            QuadratureRule::from_barycentric(3, &pts)
        }
        4 => {
            let (a1, b1, w1) = (0.445948490915965, 0.108103018168070, 0.5 * 0.223381589678011);
            let (a2, b2, w2) = (0.091576213509771, 0.816847572980459, 0.5 * 0.109951743655322);
            QuadratureRule::from_barycentric(
                4,
                &[
                    ([b1, a1, a1], w1),
                    ([a1, b1, a1], w1),
                    ([a1, a1, b1], w1),
                    ([b2, a2, a2], w2),
                    ([a2, b2, a2], w2),
                    ([a2, a2, b2], w2),
                ],
            )
        }
        d => return Err(Error::UnsupportedQuadrature(d)),
    };
    Ok(rule)
}

/// Scalar shape function values and reference gradients at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisValues {
    pub values: Vec<f64>,
    pub gradients: Vec<[f64; 2]>,
}

/// Evaluates the scalar shape functions underlying `kind` at `xi`.
///
/// P2 ordering: vertex functions 0..3, then edge functions for the edges
/// opposite vertices 0, 1, 2. A P2 vector dof `2 * j + c` is shape function
/// `j` in component `c`.
pub fn basis_eval(kind: SpaceKind, xi: [f64; 2]) -> BasisValues {
    let l = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
    let dl = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    match kind {
        SpaceKind::P1Scalar => BasisValues {
            values: l.to_vec(),
            gradients: dl.to_vec(),
        },
        SpaceKind::P2Vector => {
            let mut values = Vec::with_capacity(6);
            let mut gradients = Vec::with_capacity(6);
            for i in 0..3 {
                values.push(l[i] * (2.0 * l[i] - 1.0));
                let s = 4.0 * l[i] - 1.0;
                gradients.push([s * dl[i][0], s * dl[i][1]]);
            }
            for (i, j) in EDGE_VERTICES {
                values.push(4.0 * l[i] * l[j]);
                gradients.push([
                    4.0 * (dl[i][0] * l[j] + l[i] * dl[j][0]),
                    4.0 * (dl[i][1] * l[j] + l[i] * dl[j][1]),
                ]);
            }
            BasisValues { values, gradients }
        }
    }
}

/// Local vertices of the edge opposite vertex `k`.
pub const EDGE_VERTICES: [(usize, usize); 3] = [(1, 2), (0, 2), (0, 1)];

/// Shape functions tabulated at every point of a rule.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub rule: QuadratureRule,
    pub values: Vec<Vec<f64>>,
    pub gradients: Vec<Vec<[f64; 2]>>,
}

impl Tabulation {
    pub fn new(kind: SpaceKind, rule: QuadratureRule) -> Self {
        let (values, gradients) = rule
            .points
            .iter()
            .map(|&x| {
                let b = basis_eval(kind, x);
                (b.values, b.gradients)
            })
            .unzip();
        Self {
            rule,
            values,
            gradients,
        }
    }
}

/// Degree-of-freedom map for one space on one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct DofHandler {
    kind: SpaceKind,
    n_vertices: usize,
    n_dofs: usize,
    cell_dofs: Vec<usize>,
    points: Vec<Point>,
}

pub fn build_dof_handler(mesh: &Mesh, kind: SpaceKind) -> DofHandler {
    let nv = mesh.n_vertices();
    let per_cell = kind.dofs_per_cell();
    let mut cell_dofs = Vec::with_capacity(mesh.n_cells() * per_cell);
    let mut points: Vec<Point> = mesh.vertices().to_vec();
    match kind {
        SpaceKind::P1Scalar => {
            for c in mesh.cells() {
                cell_dofs.extend_from_slice(c);
            }
        }
        SpaceKind::P2Vector => {
            points.extend(mesh.edges().iter().map(|[a, b]| {
                let (pa, pb) = (mesh.vertices()[*a], mesh.vertices()[*b]);
                [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
            }));
            for (ci, c) in mesh.cells().iter().enumerate() {
                let e = mesh.cell_edges(ci);
                for p in [c[0], c[1], c[2], nv + e[0], nv + e[1], nv + e[2]] {
                    cell_dofs.push(2 * p);
                    cell_dofs.push(2 * p + 1);
                }
            }
        }
    }
    let n_dofs = points.len() * kind.n_components();
    DofHandler {
        kind,
        n_vertices: nv,
        n_dofs,
        cell_dofs,
        points,
    }
}

impl DofHandler {
    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn n_cells(&self) -> usize {
        self.cell_dofs.len() / self.kind.dofs_per_cell()
    }

    pub fn cell_dofs(&self, cell: usize) -> &[usize] {
        let n = self.kind.dofs_per_cell();
        &self.cell_dofs[cell * n..(cell + 1) * n]
    }

    /// Interpolation points: vertices, then (P2) edge midpoints.
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn dof_coordinate(&self, dof: usize) -> Point {
        self.points[dof / self.kind.n_components()]
    }

    /// Component (0 = x, 1 = y) carried by a dof; always 0 for scalar spaces.
    pub fn component(&self, dof: usize) -> usize {
        dof % self.kind.n_components()
    }

    /// Dofs attached to boundary entities, optionally restricted to one
    /// vector component. Sorted and unique.
    pub fn entity_dofs(&self, entities: &BoundaryEntities, component: Option<usize>) -> Vec<usize> {
        let nc = self.kind.n_components();
        let mut pts: Vec<usize> = entities.vertices.clone();
        if self.kind == SpaceKind::P2Vector {
            pts.extend(entities.edges.iter().map(|e| self.n_vertices + e));
        }
        let mut dofs: Vec<usize> = pts
            .into_iter()
            .flat_map(|p| {
                (0..nc)
                    .filter(|&c| component.is_none_or(|k| k == c))
                    .map(move |c| nc * p + c)
            })
            .collect();
        dofs.sort_unstable();
        dofs.dedup();
        dofs
    }

    /// Dofs whose basis functions vanish on the whole boundary.
    pub fn interior_dofs(&self, mesh: &Mesh) -> Vec<usize> {
        let nc = self.kind.n_components();
        let mut on_boundary = vec![false; self.points.len()];
        for (f, facet) in mesh.boundary_facets().iter().enumerate() {
            for v in facet.vertices {
                on_boundary[v] = true;
            }
            if self.kind == SpaceKind::P2Vector {
                on_boundary[self.n_vertices + mesh.facet_edge(f)] = true;
            }
        }
        (0..self.n_dofs).filter(|d| !on_boundary[d / nc]).collect()
    }

    /// Nodal interpolant of a scalar (P1) or vector (P2) field.
    pub fn interpolate(&self, f: impl Fn(Point) -> [f64; 2]) -> Vec<f64> {
        let nc = self.kind.n_components();
        let mut out = vec![0.0; self.n_dofs];
        for (p, x) in self.points.iter().enumerate() {
            let v = f(*x);
            for c in 0..nc {
                out[nc * p + c] = v[c];
            }
        }
        out
    }

    pub fn interpolate_scalar(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        self.interpolate(|x| [f(x), 0.0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{structured_rectangle, unit_square};
    use proptest::prelude::*;

    fn integrate(rule: &QuadratureRule, f: impl Fn(f64, f64, f64) -> f64) -> f64 {
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| w * f(1.0 - p[0] - p[1], p[0], p[1]))
            .sum()
    }

    #[test]
    fn quadrature_examples() {
        let q1 = quadrature(1).unwrap();
        assert_eq!(q1.len(), 1);
        assert!((q1.weights[0] - 0.5).abs() < 1e-15);
        let q2 = quadrature(2).unwrap();
        assert!((integrate(&q2, |_, l1, l2| l1 * l2) - 1.0 / 24.0).abs() < 1e-15);
        let q4 = quadrature(4).unwrap();
        assert!((integrate(&q4, |_, l1, l2| l1 * l1 * l2 * l2) - 1.0 / 180.0).abs() < 1e-13);
        assert!(matches!(quadrature(5), Err(Error::UnsupportedQuadrature(5))));
        assert!(quadrature(0).is_err());
    }

    /// ∫ λ0^a λ1^b λ2^c over the reference triangle = a! b! c! / (a+b+c+2)!
    fn monomial_exact(a: u32, b: u32, c: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(a) * fact(b) * fact(c) / fact(a + b + c + 2)
    }

    #[test]
    fn rules_are_exact_to_their_degree() {
        for d in 1..=4 {
            let q = quadrature(d).unwrap();
            assert!(q.weights.iter().all(|&w| w > 0.0));
            for a in 0..=d as u32 {
                for b in 0..=(d as u32 - a) {
                    let c = d as u32 - a - b;
                    let got = integrate(&q, |l0, l1, l2| {
                        l0.powi(a as i32) * l1.powi(b as i32) * l2.powi(c as i32)
                    });
                    assert!((got - monomial_exact(a, b, c)).abs() < 1e-14, "degree {d}: {a},{b},{c}");
                }
            }
        }
    }

    #[test]
    fn nodal_properties() {
        let p1 = basis_eval(SpaceKind::P1Scalar, [0.0, 0.0]);
        assert_eq!(p1.values, vec![1.0, 0.0, 0.0]);
        assert_eq!(p1.gradients, vec![[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]);
        // (1/2, 0) is the midpoint of the edge between vertices 0 and 1, i.e. local edge 2
        let p2 = basis_eval(SpaceKind::P2Vector, [0.5, 0.0]);
        let expect = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        for (v, e) in p2.values.iter().zip(expect) {
            assert!((v - e).abs() < 1e-15);
        }
    }

    #[test]
    fn dof_counts() {
        let sq = unit_square();
        assert_eq!(build_dof_handler(&sq, SpaceKind::P1Scalar).n_dofs(), 4);
        assert_eq!(build_dof_handler(&sq, SpaceKind::P2Vector).n_dofs(), 18);
        let m = structured_rectangle(10, 10, 1.0, 1.0);
        assert_eq!(build_dof_handler(&m, SpaceKind::P1Scalar).n_dofs(), 121);
        let p2 = build_dof_handler(&m, SpaceKind::P2Vector);
        assert_eq!(p2.n_dofs(), 2 * (121 + m.n_edges()));
        assert_eq!(p2.cell_dofs(7).len(), 12);
    }

    #[test]
    fn shared_edges_get_shared_dofs() {
        let m = structured_rectangle(3, 2, 1.5, 1.0);
        let h = build_dof_handler(&m, SpaceKind::P2Vector);
        for c in 0..m.n_cells() {
            let dofs = h.cell_dofs(c);
            let cell = m.cells()[c];
            for j in 0..6 {
                let x = h.dof_coordinate(dofs[2 * j]);
                let xi = if j < 3 {
                    m.vertices()[cell[j]]
                } else {
                    let (a, b) = EDGE_VERTICES[j - 3];
                    let (pa, pb) = (m.vertices()[cell[a]], m.vertices()[cell[b]]);
                    [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
                };
                assert_eq!(x, xi);
                assert_eq!(dofs[2 * j + 1], dofs[2 * j] + 1);
            }
        }
    }

    #[test]
    fn boundary_and_interior_dofs() {
        let m = structured_rectangle(2, 2, 1.0, 1.0);
        let h = build_dof_handler(&m, SpaceKind::P2Vector);
        // the bottom has 2 facets: 3 vertices + 2 edge midpoints
        let bottom = m.boundary_entities(crate::mesh::Tags::BOTTOM);
        assert_eq!(h.entity_dofs(&bottom, None).len(), 10);
        assert_eq!(h.entity_dofs(&bottom, Some(0)).len(), 5);
        let interior = h.interior_dofs(&m);
        for &d in &interior {
            let x = h.dof_coordinate(d);
            assert!(x[0] > 0.0 && x[0] < 1.0 && x[1] > 0.0 && x[1] < 1.0);
        }
        // 1 interior vertex and 8 interior edges
        assert_eq!(interior.len(), 2 * 9);
    }

    proptest! {
        #[test]
        fn partition_of_unity(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let xi = if a + b <= 1.0 { [a, b] } else { [1.0 - a, 1.0 - b] };
            for kind in [SpaceKind::P1Scalar, SpaceKind::P2Vector] {
                let v = basis_eval(kind, xi);
                let s: f64 = v.values.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-13);
                let g: [f64; 2] = v.gradients.iter().fold([0.0; 2], |acc, g| [acc[0] + g[0], acc[1] + g[1]]);
                prop_assert!(g[0].abs() < 1e-13 && g[1].abs() < 1e-13);
            }
        }

        #[test]
        fn gradients_match_finite_differences(a in 0.05f64..0.9, b in 0.05f64..0.9) {
            prop_assume!(a + b < 0.95);
            let h = 1e-6;
            for kind in [SpaceKind::P1Scalar, SpaceKind::P2Vector] {
                let v = basis_eval(kind, [a, b]);
                let (xp, xm) = (basis_eval(kind, [a + h, b]), basis_eval(kind, [a - h, b]));
                let (yp, ym) = (basis_eval(kind, [a, b + h]), basis_eval(kind, [a, b - h]));
                for i in 0..kind.n_shape() {
                    let fd = [(xp.values[i] - xm.values[i]) / (2.0 * h), (yp.values[i] - ym.values[i]) / (2.0 * h)];
                    prop_assert!((fd[0] - v.gradients[i][0]).abs() < 1e-6);
                    prop_assert!((fd[1] - v.gradients[i][1]).abs() < 1e-6);
                }
            }
        }
    }
}
