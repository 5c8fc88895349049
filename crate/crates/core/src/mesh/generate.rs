//! Built-in mesh generators.

use std::collections::{HashMap, HashSet, VecDeque};
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use spade::{AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation};

use super::{dist, BoundaryFacet, Mesh, Point};
use crate::error::{Error, Result};

/// Boundary tags used by the built-in generators.
pub struct Tags;

impl Tags {
    /// Top edge (traction free).
    pub const TOP: i32 = 1;
    /// Left and right edges (rollers).
    pub const SIDES: i32 = 2;
    /// Bottom edge (clamped).
    pub const BOTTOM: i32 = 3;
    pub const INJECTOR: i32 = 4;
    pub const PRODUCER: i32 = 5;
}

/// Structured `nx × ny` rectangle `[0, width] × [0, height]`, each quad split
/// along its `(0,0)-(1,1)` diagonal. `(nx+1)(ny+1)` vertices, `2 nx ny` cells.
pub fn structured_rectangle(nx: usize, ny: usize, width: f64, height: f64) -> Mesh {
    assert!(
        nx > 0 && ny > 0,
        "structured_rectangle needs at least one cell per direction"
    );
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([width * i as f64 / nx as f64, height * j as f64 / ny as f64]);
        }
    }
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            cells.push([a, b, c]);
            cells.push([a, c, d]);
        }
    }
    let mut facets = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        facets.push(BoundaryFacet {
            vertices: [idx(i, 0), idx(i + 1, 0)],
            tag: Tags::BOTTOM,
        });
    }
    for j in 0..ny {
        facets.push(BoundaryFacet {
            vertices: [idx(nx, j), idx(nx, j + 1)],
            tag: Tags::SIDES,
        });
    }
    for i in 0..nx {
        facets.push(BoundaryFacet {
            vertices: [idx(i + 1, ny), idx(i, ny)],
            tag: Tags::TOP,
        });
    }
    for j in 0..ny {
        facets.push(BoundaryFacet {
            vertices: [idx(0, j + 1), idx(0, j)],
            tag: Tags::SIDES,
        });
    }
    Mesh::new(vertices, cells, facets).expect("structured rectangle is valid by construction")
}

/// Two-triangle unit square.
pub fn unit_square() -> Mesh {
    structured_rectangle(1, 1, 1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Well {
    pub center: Point,
    pub radius: f64,
    pub tag: i32,
}

/// Rectangle with circular holes (wells).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirGeometry {
    pub width: f64,
    pub height: f64,
    pub wells: Vec<Well>,
}

impl Default for ReservoirGeometry {
    fn default() -> Self {
        Self {
            width: 100.0,
            height: 100.0,
            wells: vec![
                Well {
                    center: [35.0, 50.0],
                    radius: 1.0,
                    tag: Tags::INJECTOR,
                },
                Well {
                    center: [65.0, 50.0],
                    radius: 1.0,
                    tag: Tags::PRODUCER,
                },
            ],
        }
    }
}

impl ReservoirGeometry {
    pub fn area(&self) -> f64 {
        self.width * self.height - self.wells.iter().map(|w| PI * w.radius * w.radius).sum::<f64>()
    }

    /// Edge length of an equilateral triangle with the mean cell area.
    fn nominal_size(&self, target_cells: usize) -> f64 {
        (4.0 / 3f64.sqrt() * self.area() / target_cells as f64).sqrt()
    }

    fn well_segments(&self, radius: f64, target_cells: usize) -> usize {
        let h = self.nominal_size(target_cells);
        ((2.0 * PI * radius / (0.5 * h)).ceil() as usize).clamp(16, 256)
    }

    fn classify(&self, a: Point, b: Point) -> i32 {
        let m = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        let eps = 1e-9 * self.width.max(self.height);
        for w in &self.wells {
            if dist(m, w.center) <= w.radius + eps {
                return w.tag;
            }
        }
        if (m[1] - self.height).abs() <= eps {
            Tags::TOP
        } else if m[1].abs() <= eps {
            Tags::BOTTOM
        } else {
            Tags::SIDES
        }
    }
}

fn triangulate(geom: &ReservoirGeometry, max_area: f64, target_cells: usize) -> Result<Mesh> {
    let mut cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::new();
    let outer = [
        Point2::new(0.0, 0.0),
        Point2::new(geom.width, 0.0),
        Point2::new(geom.width, geom.height),
        Point2::new(0.0, geom.height),
    ];
    cdt.add_constraint_edges(outer, true)
        .map_err(|e| Error::InvalidMesh(format!("outer boundary: {e:?}")))?;
    for w in &geom.wells {
        let n = geom.well_segments(w.radius, target_cells);
        let ring = (0..n).map(|k| {
            let t = 2.0 * PI * k as f64 / n as f64;
            Point2::new(w.center[0] + w.radius * t.cos(), w.center[1] + w.radius * t.sin())
        });
        cdt.add_constraint_edges(ring, true)
            .map_err(|e| Error::InvalidMesh(format!("well boundary: {e:?}")))?;
    }
    let result = cdt.refine(
        RefinementParameters::new()
            .exclude_outer_faces(true)
            .with_max_allowed_area(max_area)
            .with_angle_limit(AngleLimit::from_deg(28.0))
            .with_max_additional_vertices(4 * target_cells + 10_000),
    );
    if !result.refinement_complete {
        return Err(Error::InvalidMesh("mesh refinement did not complete".into()));
    }
    let excluded: HashSet<usize> = result.excluded_faces.iter().map(|f| f.index()).collect();

    let mut index_map: HashMap<usize, usize> = HashMap::new();
    let mut vertices: Vec<Point> = Vec::new();
    let mut cells = Vec::new();
    for face in cdt.inner_faces() {
        if excluded.contains(&face.fix().index()) {
            continue;
        }
        let vs = face.vertices().map(|v| {
            let id = v.fix().index();
            *index_map.entry(id).or_insert_with(|| {
                let p = v.position();
                vertices.push([p.x, p.y]);
                vertices.len() - 1
            })
        });
        cells.push(vs);
    }

    let (vertices, cells) = reorder_cuthill_mckee(vertices, cells);

    let mut edge_count: HashMap<[usize; 2], (usize, [usize; 2])> = HashMap::new();
    for c in &cells {
        for k in 0..3 {
            let (a, b) = (c[(k + 1) % 3], c[(k + 2) % 3]);
            let key = if a < b { [a, b] } else { [b, a] };
            edge_count.entry(key).or_insert((0, [a, b])).0 += 1;
        }
    }
    let mut boundary: Vec<[usize; 2]> = edge_count.values().filter(|(n, _)| *n == 1).map(|(_, e)| *e).collect();
    boundary.sort_unstable();
    let facets = boundary
        .into_iter()
        .map(|e| BoundaryFacet {
            vertices: e,
            tag: geom.classify(vertices[e[0]], vertices[e[1]]),
        })
        .collect();
    Mesh::new(vertices, cells, facets)
}

/// Quality triangulation of the reservoir geometry with roughly
/// `target_cells` cells, graded towards the wells.
pub fn reservoir(geom: &ReservoirGeometry, target_cells: usize) -> Result<Mesh> {
    if target_cells < 50 {
        return Err(Error::Config("reservoir mesh needs at least 50 cells".into()));
    }
    let mut max_area = 1.6 * geom.area() / target_cells as f64;
    let mut best: Option<Mesh> = None;
    for _ in 0..4 {
        let mesh = triangulate(geom, max_area, target_cells)?;
        let ratio = mesh.n_cells() as f64 / target_cells as f64;
        let better = best
            .as_ref()
            .is_none_or(|b| (ratio.ln()).abs() < ((b.n_cells() as f64 / target_cells as f64).ln()).abs());
        if better {
            best = Some(mesh);
        }
        if (ratio - 1.0).abs() < 0.03 {
            break;
        }
        max_area *= ratio;
    }
    Ok(best.unwrap())
}

/// Gmsh `.geo` description of the reservoir geometry with characteristic length `h`.
pub fn reservoir_geo_script(geom: &ReservoirGeometry, h: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "// reservoir: {} x {} m, {} wells",
        geom.width,
        geom.height,
        geom.wells.len()
    );
    let _ = writeln!(s, "h = {h};");
    let _ = writeln!(s, "Point(1) = {{0, 0, 0, h}};");
    let _ = writeln!(s, "Point(2) = {{{}, 0, 0, h}};", geom.width);
    let _ = writeln!(s, "Point(3) = {{{}, {}, 0, h}};", geom.width, geom.height);
    let _ = writeln!(s, "Point(4) = {{0, {}, 0, h}};", geom.height);
    s.push_str("Line(1) = {1, 2};\nLine(2) = {2, 3};\nLine(3) = {3, 4};\nLine(4) = {4, 1};\n");
    s.push_str("Curve Loop(1) = {1, 2, 3, 4};\n");
    let mut loops = vec![1];
    for (k, w) in geom.wells.iter().enumerate() {
        let p = 10 + 5 * k;
        let c = 10 + 4 * k;
        let (x, y, r) = (w.center[0], w.center[1], w.radius);
        let hw = format!("h * {}", (r / 2.0).min(1.0));
        let _ = writeln!(s, "Point({p}) = {{{x}, {y}, 0, {hw}}};");
        let _ = writeln!(s, "Point({}) = {{{}, {y}, 0, {hw}}};", p + 1, x + r);
        let _ = writeln!(s, "Point({}) = {{{x}, {}, 0, {hw}}};", p + 2, y + r);
        let _ = writeln!(s, "Point({}) = {{{}, {y}, 0, {hw}}};", p + 3, x - r);
        let _ = writeln!(s, "Point({}) = {{{x}, {}, 0, {hw}}};", p + 4, y - r);
        for q in 0..4 {
            let _ = writeln!(
                s,
                "Circle({}) = {{{}, {p}, {}}};",
                c + q,
                p + 1 + q,
                p + 1 + (q + 1) % 4
            );
        }
        let _ = writeln!(s, "Curve Loop({}) = {{{}, {}, {}, {}}};", k + 2, c, c + 1, c + 2, c + 3);
        let _ = writeln!(
            s,
            "Physical Curve({}) = {{{}, {}, {}, {}}};",
            w.tag,
            c,
            c + 1,
            c + 2,
            c + 3
        );
        loops.push(k + 2);
    }
    let loop_list: Vec<String> = loops.iter().map(|l| l.to_string()).collect();
    let _ = writeln!(s, "Plane Surface(1) = {{{}}};", loop_list.join(", "));
    let _ = writeln!(s, "Physical Curve({}) = {{3}};", Tags::TOP);
    let _ = writeln!(s, "Physical Curve({}) = {{2, 4}};", Tags::SIDES);
    let _ = writeln!(s, "Physical Curve({}) = {{1}};", Tags::BOTTOM);
    s.push_str("Physical Surface(100) = {1};\n");
    s
}

/// Reverse Cuthill-McKee vertex renumbering; cells are sorted by their
/// smallest new vertex index.
fn reorder_cuthill_mckee(vertices: Vec<Point>, cells: Vec<[usize; 3]>) -> (Vec<Point>, Vec<[usize; 3]>) {
    let n = vertices.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for c in &cells {
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    adj[c[a]].push(c[b]);
                }
            }
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    let mut queue = VecDeque::new();
    loop {
        // start each component from its lowest-degree unvisited vertex (ties: lowest y, then x)
        let start = (0..n).filter(|&v| !visited[v]).min_by(|&a, &b| {
            adj[a]
                .len()
                .cmp(&adj[b].len())
                .then(vertices[a][1].total_cmp(&vertices[b][1]))
                .then(vertices[a][0].total_cmp(&vertices[b][0]))
        });
        let Some(start) = start else { break };
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (adj[w].len(), w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    let mut new_index = vec![0; n];
    for (new, &old) in order.iter().enumerate() {
        new_index[old] = new;
    }
    let new_vertices = order.iter().map(|&old| vertices[old]).collect();
    let mut new_cells: Vec<[usize; 3]> = cells.iter().map(|c| c.map(|v| new_index[v])).collect();
    new_cells.sort_by_key(|c| {
        let mut s = *c;
        s.sort_unstable();
        s
    });
    (new_vertices, new_cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structured_counts() {
        let m = structured_rectangle(10, 10, 1.0, 1.0);
        assert_eq!(m.n_vertices(), 121);
        assert_eq!(m.n_cells(), 200);
        assert!((m.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reservoir_area_and_tags() {
        let geom = ReservoirGeometry::default();
        let m = reservoir(&geom, 2000).unwrap();
        let n = m.n_cells() as f64;
        assert!((1700.0..2300.0).contains(&n), "{n} cells");
        // polygonal wells: area of the regular n-gon instead of the disk
        let segs = geom.well_segments(1.0, 2000) as f64;
        let hole = 0.5 * segs * (2.0 * PI / segs).sin();
        let want = 100.0 * 100.0 - 2.0 * hole;
        assert!((m.total_area() - want).abs() <= 1e-10 * want);
        for tag in [Tags::TOP, Tags::SIDES, Tags::BOTTOM, Tags::INJECTOR, Tags::PRODUCER] {
            assert!(!m.boundary_entities(tag).facets.is_empty(), "tag {tag}");
        }
        assert_eq!(m.boundary_entities(0).facets.len(), 0);
        // refinement never splits well segments (they are shorter than the local size)
        assert_eq!(m.boundary_entities(Tags::INJECTOR).facets.len(), segs as usize);
    }

    #[test]
    fn geo_script_mentions_every_tag() {
        let s = reservoir_geo_script(&ReservoirGeometry::default(), 2.0);
        for tag in 1..=5 {
            assert!(s.contains(&format!("Physical Curve({tag})")));
        }
    }
}
