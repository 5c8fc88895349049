//! Unstructured triangle meshes with tagged boundary facets.

mod generate;
pub mod gmsh;
mod locate;

use std::collections::HashMap;

pub use generate::{reservoir, reservoir_geo_script, structured_rectangle, unit_square, ReservoirGeometry, Tags};
pub use locate::PointLocator;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Tag assigned to boundary facets that carry no physical group.
pub const UNTAGGED: i32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryFacet {
    pub vertices: [usize; 2],
    pub tag: i32,
}

/// What happened while normalizing an input mesh.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub flipped_cells: usize,
    pub dropped_vertices: usize,
    pub untagged_facets: usize,
    pub warnings: Vec<String>,
}

/// Immutable triangle mesh.
///
/// Cells are positively oriented, every boundary facet lies on exactly one
/// cell and the facets cover the topological boundary exactly.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    cells: Vec<[usize; 3]>,
    boundary_facets: Vec<BoundaryFacet>,
    /// Unique edges in sorted-endpoint order, `[min, max]`.
    edges: Vec<[usize; 2]>,
    /// Local edge `k` is opposite local vertex `k`.
    cell_edges: Vec<[usize; 3]>,
    facet_edges: Vec<usize>,
    report: LoadReport,
}

/// Equality ignores the load report.
impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices && self.cells == other.cells && self.boundary_facets == other.boundary_facets
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGeometry {
    /// Columns are the edge vectors `v1 - v0` and `v2 - v0`.
    pub jacobian: [[f64; 2]; 2],
    pub det: f64,
    pub inverse_transpose: [[f64; 2]; 2],
    pub origin: Point,
}

impl CellGeometry {
    pub fn area(&self) -> f64 {
        0.5 * self.det
    }

    /// Maps reference coordinates `(xi, eta)` to physical space.
    pub fn map(&self, xi: f64, eta: f64) -> Point {
        let j = &self.jacobian;
        [
            self.origin[0] + j[0][0] * xi + j[0][1] * eta,
            self.origin[1] + j[1][0] * xi + j[1][1] * eta,
        ]
    }

    /// Physical gradient from a reference gradient.
    pub fn push_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        let k = &self.inverse_transpose;
        [k[0][0] * g[0] + k[0][1] * g[1], k[1][0] * g[0] + k[1][1] * g[1]]
    }
}

/// Mesh entities carrying a boundary tag.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundaryEntities {
    pub facets: Vec<usize>,
    pub edges: Vec<usize>,
    pub vertices: Vec<usize>,
    pub warning: Option<String>,
}

impl Mesh {
    /// Validates and normalizes raw mesh data.
    pub fn new(vertices: Vec<Point>, cells: Vec<[usize; 3]>, facets: Vec<BoundaryFacet>) -> Result<Self> {
        let mut report = LoadReport::default();
        let nv = vertices.len();
        if cells.is_empty() {
            return Err(Error::InvalidMesh("mesh has no cells".into()));
        }
        for (c, cell) in cells.iter().enumerate() {
            if cell.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("cell {c} references a missing vertex")));
            }
            if cell[0] == cell[1] || cell[1] == cell[2] || cell[0] == cell[2] {
                return Err(Error::DegenerateCell { cell: c, det: 0.0 });
            }
        }
        for (f, facet) in facets.iter().enumerate() {
            if facet.vertices.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("facet {f} references a missing vertex")));
            }
        }

        // drop vertices that no cell uses, keeping relative order
        let mut used = vec![false; nv];
        cells.iter().flatten().for_each(|&v| used[v] = true);
        let (vertices, cells, facets) = if used.iter().all(|&u| u) {
            (vertices, cells, facets)
        } else {
            let mut map = vec![usize::MAX; nv];
            let mut kept = Vec::new();
            for (v, p) in vertices.iter().enumerate() {
                if used[v] {
                    map[v] = kept.len();
                    kept.push(*p);
                }
            }
            report.dropped_vertices = nv - kept.len();
            let cells = cells.iter().map(|c| c.map(|v| map[v])).collect();
            let mut out_facets = Vec::with_capacity(facets.len());
            for f in facets {
                if f.vertices.iter().any(|&v| map[v] == usize::MAX) {
                    return Err(Error::InvalidMesh(
                        "boundary facet uses a vertex outside every cell".into(),
                    ));
                }
                out_facets.push(BoundaryFacet {
                    vertices: f.vertices.map(|v| map[v]),
                    tag: f.tag,
                });
            }
            (kept, cells, out_facets)
        };

        let mut cells = cells;
        for (c, cell) in cells.iter_mut().enumerate() {
            let det = signed_det(&vertices, cell);
            if det == 0.0 || !det.is_finite() {
                return Err(Error::DegenerateCell { cell: c, det });
            }
            if det < 0.0 {
                cell.swap(1, 2);
                report.flipped_cells += 1;
            }
        }

        let mut edge_cells: HashMap<[usize; 2], u32> = HashMap::with_capacity(cells.len() * 2);
        for cell in &cells {
            for k in 0..3 {
                *edge_cells.entry(local_edge(cell, k)).or_insert(0) += 1;
            }
        }
        let mut edges: Vec<[usize; 2]> = edge_cells.keys().copied().collect();
        edges.sort_unstable();
        if let Some(e) = edges.iter().find(|e| edge_cells[*e] > 2) {
            return Err(Error::InvalidMesh(format!(
                "edge {e:?} is shared by more than two cells"
            )));
        }
        let edge_index: HashMap<[usize; 2], usize> = edges.iter().enumerate().map(|(i, e)| (*e, i)).collect();
        let cell_edges = cells
            .iter()
            .map(|c| [0, 1, 2].map(|k| edge_index[&local_edge(c, k)]))
            .collect();

        let mut seen: HashMap<usize, i32> = HashMap::new();
        let mut boundary_facets = Vec::with_capacity(facets.len());
        let mut facet_edges = Vec::with_capacity(facets.len());
        for f in facets {
            let key = sorted(f.vertices);
            let Some(&e) = edge_index.get(&key) else {
                return Err(Error::InvalidMesh(format!("facet {key:?} is not an edge of any cell")));
            };
            if edge_cells[&key] != 1 {
                return Err(Error::InvalidMesh(format!("facet {key:?} is an interior edge")));
            }
            if let Some(&first) = seen.get(&e) {
                if first != f.tag {
                    report.warnings.push(format!(
                        "facet {key:?} tagged twice ({first}, {}); keeping {first}",
                        f.tag
                    ));
                }
                continue;
            }
            seen.insert(e, f.tag);
            boundary_facets.push(BoundaryFacet {
                vertices: f.vertices,
                tag: f.tag,
            });
            facet_edges.push(e);
        }
        for (e, edge) in edges.iter().enumerate() {
            if edge_cells[edge] == 1 && !seen.contains_key(&e) {
                boundary_facets.push(BoundaryFacet {
                    vertices: *edge,
                    tag: UNTAGGED,
                });
                facet_edges.push(e);
                report.untagged_facets += 1;
            }
        }

        Ok(Self {
            vertices,
            cells,
            boundary_facets,
            edges,
            cell_edges,
            facet_edges,
            report,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn boundary_facets(&self) -> &[BoundaryFacet] {
        &self.boundary_facets
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn cell_edges(&self, cell: usize) -> [usize; 3] {
        self.cell_edges[cell]
    }

    pub fn facet_edge(&self, facet: usize) -> usize {
        self.facet_edges[facet]
    }

    pub fn load_report(&self) -> &LoadReport {
        &self.report
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn cell_geometry(&self, cell: usize) -> Result<CellGeometry> {
        let c = self
            .cells
            .get(cell)
            .ok_or_else(|| Error::InvalidMesh(format!("cell index {cell} out of range")))?;
        let [p0, p1, p2] = c.map(|v| self.vertices[v]);
        let jacobian = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
        let det = jacobian[0][0] * jacobian[1][1] - jacobian[0][1] * jacobian[1][0];
        if det <= 0.0 || !det.is_finite() {
            return Err(Error::DegenerateCell { cell, det });
        }
        // J^{-T} = (1/det) [[d, -c], [-b, a]] for J = [[a, b], [c, d]]
        let inverse_transpose = [
            [jacobian[1][1] / det, -jacobian[1][0] / det],
            [-jacobian[0][1] / det, jacobian[0][0] / det],
        ];
        Ok(CellGeometry {
            jacobian,
            det,
            inverse_transpose,
            origin: p0,
        })
    }

    pub fn cell_area(&self, cell: usize) -> f64 {
        0.5 * signed_det(&self.vertices, &self.cells[cell])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_area(c)).sum()
    }

    /// Distinct boundary tags, sorted.
    pub fn tags(&self) -> Vec<i32> {
        let mut t: Vec<i32> = self.boundary_facets.iter().map(|f| f.tag).collect();
        t.sort_unstable();
        t.dedup();
        t
    }

    /// Facets, edges and vertices carrying `tag`, each listed once in ascending order.
    pub fn boundary_entities(&self, tag: i32) -> BoundaryEntities {
        let facets: Vec<usize> = (0..self.boundary_facets.len())
            .filter(|&f| self.boundary_facets[f].tag == tag)
            .collect();
        if facets.is_empty() {
            let warning = format!("boundary tag {tag} does not occur in the mesh");
            log::warn!("{warning}");
            return BoundaryEntities {
                warning: Some(warning),
                ..Default::default()
            };
        }
        let mut edges: Vec<usize> = facets.iter().map(|&f| self.facet_edges[f]).collect();
        edges.sort_unstable();
        let mut vertices: Vec<usize> = facets.iter().flat_map(|&f| self.boundary_facets[f].vertices).collect();
        vertices.sort_unstable();
        vertices.dedup();
        BoundaryEntities {
            facets,
            edges,
            vertices,
            warning: None,
        }
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }

    /// Longest edge length.
    pub fn max_edge_length(&self) -> f64 {
        self.edges
            .iter()
            .map(|[a, b]| dist(self.vertices[*a], self.vertices[*b]))
            .fold(0.0, f64::max)
    }
}

fn signed_det(vertices: &[Point], c: &[usize; 3]) -> f64 {
    let [p0, p1, p2] = c.map(|v| vertices[v]);
    (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])
}

fn sorted(e: [usize; 2]) -> [usize; 2] {
    if e[0] < e[1] {
        e
    } else {
        [e[1], e[0]]
    }
}

fn local_edge(cell: &[usize; 3], k: usize) -> [usize; 2] {
    sorted([cell[(k + 1) % 3], cell[(k + 2) % 3]])
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
