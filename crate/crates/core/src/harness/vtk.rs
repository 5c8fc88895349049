//! Legacy ASCII VTK output and a structural reader for checking it.

use std::fmt::Write as _;
use std::path::Path;

use crate::assembly::MaterialParams;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::spaces::{basis_eval, DofHandler, SpaceKind};

/// Plane-strain von Mises stress from the in-plane strain.
pub fn von_mises_plane_strain(params: &MaterialParams, exx: f64, eyy: f64, exy: f64) -> f64 {
    let tr = exx + eyy;
    let sxx = 2.0 * params.mu * exx + params.lambda * tr;
    let syy = 2.0 * params.mu * eyy + params.lambda * tr;
    let szz = params.lambda * tr;
    let sxy = 2.0 * params.mu * exy;
    (0.5 * ((sxx - syy).powi(2) + (syy - szz).powi(2) + (szz - sxx).powi(2)) + 3.0 * sxy * sxy).sqrt()
}

/// Von Mises stress per vertex: cell averages of the P2 strain, then
/// area-weighted averages over the cells around each vertex.
pub fn von_mises_at_vertices(
    mesh: &Mesh,
    dofs_u: &DofHandler,
    u: &[f64],
    materials: &[MaterialParams],
) -> Result<Vec<f64>> {
    // the P2 gradient is affine, so its cell average is the centroid value
    let centroid = basis_eval(SpaceKind::P2Vector, [1.0 / 3.0, 1.0 / 3.0]);
    let mut acc = vec![0.0; mesh.n_vertices()];
    let mut weight = vec![0.0; mesh.n_vertices()];
    for cell in 0..mesh.n_cells() {
        let geom = mesh.cell_geometry(cell)?;
        let dofs = dofs_u.cell_dofs(cell);
        let mut grad = [[0.0; 2]; 2];
        for (j, g) in centroid.gradients.iter().enumerate() {
            let g = geom.push_gradient(*g);
            for c in 0..2 {
                let v = u[dofs[2 * j + c]];
                grad[c][0] += v * g[0];
                grad[c][1] += v * g[1];
            }
        }
        let vm = von_mises_plane_strain(
            &materials[cell],
            grad[0][0],
            grad[1][1],
            0.5 * (grad[0][1] + grad[1][0]),
        );
        let area = geom.area();
        for &v in &mesh.cells()[cell] {
            acc[v] += vm * area;
            weight[v] += area;
        }
    }
    Ok(acc.iter().zip(&weight).map(|(a, w)| a / w).collect())
}

/// Writes `p` (P1), the vertex values of `u` (P2) and von Mises stress.
pub fn vtk_string(
    mesh: &Mesh,
    dofs_u: &DofHandler,
    u: &[f64],
    p: &[f64],
    materials: &[MaterialParams],
    title: &str,
) -> Result<String> {
    let nv = mesh.n_vertices();
    if p.len() != nv || u.len() != dofs_u.n_dofs() || materials.len() != mesh.n_cells() {
        return Err(Error::Dimension("VTK export: field sizes do not match the mesh".into()));
    }
    let vm = von_mises_at_vertices(mesh, dofs_u, u, materials)?;
    let mut s = String::with_capacity(64 * nv);
    let title = title.replace('\n', " ");
    let _ = writeln!(
        s,
        "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID"
    );
    let _ = writeln!(s, "POINTS {nv} double");
    for x in mesh.vertices() {
        let _ = writeln!(s, "{:e} {:e} 0", x[0], x[1]);
    }
    let nc = mesh.n_cells();
    let _ = writeln!(s, "CELLS {nc} {}", 4 * nc);
    for c in mesh.cells() {
        let _ = writeln!(s, "3 {} {} {}", c[0], c[1], c[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nc}");
    for _ in 0..nc {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "POINT_DATA {nv}\nSCALARS p double 1\nLOOKUP_TABLE default");
    for v in p {
        let _ = writeln!(s, "{v:e}");
    }
    let _ = writeln!(s, "VECTORS u double");
    // vertex dofs come first in the P2 numbering
    for v in 0..nv {
        let _ = writeln!(s, "{:e} {:e} 0", u[2 * v], u[2 * v + 1]);
    }
    let _ = writeln!(s, "SCALARS von_mises double 1\nLOOKUP_TABLE default");
    for v in &vm {
        let _ = writeln!(s, "{v:e}");
    }
    Ok(s)
}

pub fn export_vtk(
    mesh: &Mesh,
    dofs_u: &DofHandler,
    u: &[f64],
    p: &[f64],
    materials: &[MaterialParams],
    path: &Path,
) -> Result<()> {
    let text = vtk_string(mesh, dofs_u, u, p, materials, "poroelastic state")?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VtkArray {
    pub name: String,
    pub components: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VtkSummary {
    pub n_points: usize,
    pub n_cells: usize,
    pub point_data: Vec<VtkArray>,
}

impl VtkSummary {
    pub fn array(&self, name: &str) -> Option<&VtkArray> {
        self.point_data.iter().find(|a| a.name == name)
    }
}

/// Checks section order, counts and array lengths of a legacy ASCII
/// unstructured-grid file of triangles.
pub fn parse_vtk(text: &str) -> Result<VtkSummary> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| -> Result<(usize, &str)> {
        lines.next().ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("unexpected end of file, expected {what}"),
        })
    };
    let err = |line: usize, message: String| Error::Parse { line, message };

    let (l, header) = next("header")?;
    if !header.starts_with("# vtk DataFile Version") {
        return Err(err(l, "missing vtk header".into()));
    }
    next("title")?;
    let (l, fmt) = next("ASCII")?;
    if fmt != "ASCII" {
        return Err(err(l, format!("expected ASCII, found '{fmt}'")));
    }
    let (l, ds) = next("DATASET")?;
    if ds != "DATASET UNSTRUCTURED_GRID" {
        return Err(err(l, format!("expected DATASET UNSTRUCTURED_GRID, found '{ds}'")));
    }

    let count = |l: usize, line: &str, key: &str, pos: usize| -> Result<usize> {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.first() != Some(&key) {
            return Err(err(l, format!("expected {key}, found '{line}'")));
        }
        parts
            .get(pos)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(l, format!("bad count in '{line}'")))
    };
    let floats = |l: usize, line: &str, n: usize| -> Result<Vec<f64>> {
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| err(l, format!("bad number '{t}'"))))
            .collect::<Result<_>>()?;
        if v.len() != n {
            return Err(err(l, format!("expected {n} values, found {}", v.len())));
        }
        Ok(v)
    };

    let (l, pts) = next("POINTS")?;
    let n_points = count(l, pts, "POINTS", 1)?;
    for _ in 0..n_points {
        let (l, line) = next("point")?;
        floats(l, line, 3)?;
    }
    let (l, cells) = next("CELLS")?;
    let n_cells = count(l, cells, "CELLS", 1)?;
    if count(l, cells, "CELLS", 2)? != 4 * n_cells {
        return Err(err(l, "CELLS size does not match triangle connectivity".into()));
    }
    for _ in 0..n_cells {
        let (l, line) = next("cell")?;
        let v = floats(l, line, 4)?;
        if v[0] != 3.0 || v[1..].iter().any(|&i| i < 0.0 || i as usize >= n_points) {
            return Err(err(l, "invalid triangle connectivity".into()));
        }
    }
    let (l, ct) = next("CELL_TYPES")?;
    if count(l, ct, "CELL_TYPES", 1)? != n_cells {
        return Err(err(l, "CELL_TYPES count differs from CELLS".into()));
    }
    for _ in 0..n_cells {
        let (l, line) = next("cell type")?;
        if line != "5" {
            return Err(err(l, format!("unsupported cell type '{line}'")));
        }
    }

    let mut point_data = Vec::new();
    if let Some((l, pd)) = lines.next() {
        if count(l, pd, "POINT_DATA", 1)? != n_points {
            return Err(err(l, "POINT_DATA count differs from POINTS".into()));
        }
        while let Some((l, line)) = lines.next() {
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let (name, components) = match parts.as_slice() {
                ["SCALARS", name, _ty, rest @ ..] => {
                    let nc = rest
                        .first()
                        .map_or(Ok(1), |v| v.parse().map_err(|_| err(l, "bad component count".into())))?;
                    let (l2, lt) = lines.next().ok_or_else(|| err(l, "missing LOOKUP_TABLE".into()))?;
                    if !lt.starts_with("LOOKUP_TABLE") {
                        return Err(err(l2, "expected LOOKUP_TABLE".into()));
                    }
                    (name.to_string(), nc)
                }
                ["VECTORS", name, _ty] => (name.to_string(), 3),
                _ => return Err(err(l, format!("unexpected line '{line}'"))),
            };
            let mut values = Vec::with_capacity(n_points * components);
            for _ in 0..n_points {
                let (l, row) = lines
                    .next()
                    .ok_or_else(|| err(l, format!("array {name} is truncated")))?;
                values.extend(floats(l, row, components)?);
            }
            point_data.push(VtkArray {
                name,
                components,
                values,
            });
        }
    }
    Ok(VtkSummary {
        n_points,
        n_cells,
        point_data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::structured_rectangle;
    use crate::spaces::build_dof_handler;

    fn unit_material() -> MaterialParams {
        MaterialParams {
            mu: 1.0,
            lambda: 0.0,
            storage: 1.0,
            permeability: 1.0,
            fluid_viscosity: 1.0,
            alpha_grad: 1.0,
            alpha_div: 1.0,
        }
    }

    #[test]
    fn zero_fields_round_trip() {
        let m = structured_rectangle(3, 2, 1.0, 1.0);
        let du = build_dof_handler(&m, SpaceKind::P2Vector);
        let mats = vec![unit_material(); m.n_cells()];
        let text = vtk_string(&m, &du, &vec![0.0; du.n_dofs()], &vec![0.0; m.n_vertices()], &mats, "t").unwrap();
        let s = parse_vtk(&text).unwrap();
        assert_eq!((s.n_points, s.n_cells), (m.n_vertices(), m.n_cells()));
        for name in ["p", "u", "von_mises"] {
            assert!(s.array(name).unwrap().values.iter().all(|&v| v == 0.0));
        }
        assert_eq!(s.array("u").unwrap().values.len(), 3 * m.n_vertices());
    }

    #[test]
    fn uniaxial_strain_gives_uniform_von_mises() {
        let m = structured_rectangle(3, 3, 1.0, 1.0);
        let du = build_dof_handler(&m, SpaceKind::P2Vector);
        let u = du.interpolate(|x| [x[0], 0.0]);
        let mats = vec![unit_material(); m.n_cells()];
        let vm = von_mises_at_vertices(&m, &du, &u, &mats).unwrap();
        // σxx = 2μ = 2, all other components zero
        assert!(vm.iter().all(|v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn validator_rejects_broken_files() {
        let m = structured_rectangle(1, 1, 1.0, 1.0);
        let du = build_dof_handler(&m, SpaceKind::P2Vector);
        let mats = vec![unit_material(); m.n_cells()];
        let good = vtk_string(&m, &du, &vec![0.0; du.n_dofs()], &[1.0; 4], &mats, "t").unwrap();
        assert!(parse_vtk(&good.replace("CELL_TYPES 2", "CELL_TYPES 3")).is_err());
        assert!(parse_vtk(&good.replace("UNSTRUCTURED_GRID", "POLYDATA")).is_err());
        let truncated: String = good
            .lines()
            .take(good.lines().count() - 1)
            .collect::<Vec<_>>()
            .join("\n");
        assert!(parse_vtk(&truncated).is_err());
    }
}
