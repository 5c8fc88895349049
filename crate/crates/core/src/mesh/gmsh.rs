//! Gmsh ASCII v2.2 reader and writer.
//!
//! Only 2-node lines (type 1, boundary facets tagged by physical group) and
//! 3-node triangles (type 2, cells) are accepted; 1-node point elements are
//! ignored. Anything else is rejected.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{BoundaryFacet, Mesh, Point, UNTAGGED};
use crate::error::{Error, Result};

const ELEM_LINE: u32 = 1;
const ELEM_TRIANGLE: u32 = 2;
const ELEM_POINT: u32 = 15;

pub fn read_gmsh(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Option<(usize, &'a str)> {
        for (i, l) in self.inner.by_ref() {
            self.last = i + 1;
            let t = l.trim();
            if !t.is_empty() {
                return Some((i + 1, t));
            }
        }
        None
    }

    fn expect_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let last = self.last;
        self.next_line().ok_or_else(|| Error::Parse {
            line: last + 1,
            message: format!("unexpected end of file, expected {what}"),
        })
    }

    fn expect_exact(&mut self, token: &str) -> Result<()> {
        let (n, l) = self.expect_line(token)?;
        if l != token {
            return Err(Error::Parse {
                line: n,
                message: format!("expected `{token}`, found `{l}`"),
            });
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {what} `{s}`"),
    })
}

/// Parses the text of a `.msh` file.
pub fn parse(text: &str) -> Result<Mesh> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let mut have_format = false;
    let mut nodes: Option<(Vec<Point>, HashMap<u64, usize>)> = None;
    let mut cells_raw: Vec<[u64; 3]> = Vec::new();
    let mut facets_raw: Vec<([u64; 2], i32)> = Vec::new();
    let mut have_elements = false;

    while let Some((n, line)) = lines.next_line() {
        match line {
            "$MeshFormat" => {
                let (ln, l) = lines.expect_line("format line")?;
                let f: Vec<&str> = l.split_whitespace().collect();
                if f.len() != 3 {
                    return Err(Error::Parse {
                        line: ln,
                        message: format!("malformed format line `{l}`"),
                    });
                }
                if !f[0].starts_with("2.") {
                    return Err(Error::UnsupportedFormat(format!(
                        "Gmsh format version {}; re-export as ASCII 2.2 (gmsh -format msh22)",
                        f[0]
                    )));
                }
                if f[1] != "0" {
                    return Err(Error::UnsupportedFormat(
                        "binary Gmsh files are not supported; re-export as ASCII 2.2".into(),
                    ));
                }
                lines.expect_exact("$EndMeshFormat")?;
                have_format = true;
            }
            "$Nodes" => {
                if !have_format {
                    return Err(Error::Parse {
                        line: n,
                        message: "$Nodes before $MeshFormat".into(),
                    });
                }
                let (ln, l) = lines.expect_line("node count")?;
                let count: usize = parse_num(l, ln, "node count")?;
                let mut pts = Vec::with_capacity(count);
                let mut ids = HashMap::with_capacity(count);
                for _ in 0..count {
                    let (ln, l) = lines.expect_line("node record")?;
                    let f: Vec<&str> = l.split_whitespace().collect();
                    if f.len() != 4 {
                        return Err(Error::Parse {
                            line: ln,
                            message: format!("malformed node record `{l}`"),
                        });
                    }
                    let id: u64 = parse_num(f[0], ln, "node id")?;
                    let x: f64 = parse_num(f[1], ln, "coordinate")?;
                    let y: f64 = parse_num(f[2], ln, "coordinate")?;
                    let z: f64 = parse_num(f[3], ln, "coordinate")?;
                    if z.abs() > 1e-12 {
                        return Err(Error::Parse {
                            line: ln,
                            message: format!("node {id} has z = {z}; only planar meshes are supported"),
                        });
                    }
                    if ids.insert(id, pts.len()).is_some() {
                        return Err(Error::Parse {
                            line: ln,
                            message: format!("duplicate node id {id}"),
                        });
                    }
                    pts.push([x, y]);
                }
                lines.expect_exact("$EndNodes")?;
                nodes = Some((pts, ids));
            }
            "$Elements" => {
                let (ln, l) = lines.expect_line("element count")?;
                let count: usize = parse_num(l, ln, "element count")?;
                for _ in 0..count {
                    let (ln, l) = lines.expect_line("element record")?;
                    let f: Vec<&str> = l.split_whitespace().collect();
                    if f.len() < 3 {
                        return Err(Error::Parse {
                            line: ln,
                            message: format!("malformed element record `{l}`"),
                        });
                    }
                    let etype: u32 = parse_num(f[1], ln, "element type")?;
                    let ntags: usize = parse_num(f[2], ln, "tag count")?;
                    let first_node = 3 + ntags;
                    let want = match etype {
                        ELEM_LINE => 2,
                        ELEM_TRIANGLE => 3,
                        ELEM_POINT => 1,
                        other => return Err(Error::UnsupportedFormat(format!(
                            "element type {other} at line {ln}; only 2-node lines and 3-node triangles are supported"
                        ))),
                    };
                    if f.len() != first_node + want {
                        return Err(Error::Parse {
                            line: ln,
                            message: format!("element record `{l}` has the wrong number of fields"),
                        });
                    }
                    let physical: i32 = if ntags > 0 {
                        parse_num(f[3], ln, "physical tag")?
                    } else {
                        UNTAGGED
                    };
                    let node = |k: usize| parse_num::<u64>(f[first_node + k], ln, "node id");
                    match etype {
                        ELEM_LINE => facets_raw.push(([node(0)?, node(1)?], physical)),
                        ELEM_TRIANGLE => cells_raw.push([node(0)?, node(1)?, node(2)?]),
                        _ => {}
                    }
                }
                lines.expect_exact("$EndElements")?;
                have_elements = true;
            }
            other if other.starts_with("$End") => {
                return Err(Error::Parse {
                    line: n,
                    message: format!("unexpected `{other}`"),
                });
            }
            other if other.starts_with('$') => {
                // unknown section: skip to its end marker
                let end = format!("$End{}", &other[1..]);
                loop {
                    let (_, l) = lines.expect_line(&end)?;
                    if l == end {
                        break;
                    }
                }
            }
            other => {
                return Err(Error::Parse {
                    line: n,
                    message: format!("expected a section header, found `{other}`"),
                });
            }
        }
    }

    if !have_format {
        return Err(Error::Parse {
            line: lines.last,
            message: "missing $MeshFormat section".into(),
        });
    }
    let Some((points, ids)) = nodes else {
        return Err(Error::Parse {
            line: lines.last,
            message: "missing $Nodes section".into(),
        });
    };
    if !have_elements {
        return Err(Error::Parse {
            line: lines.last,
            message: "missing $Elements section".into(),
        });
    }
    let lookup = |id: u64| {
        ids.get(&id)
            .copied()
            .ok_or_else(|| Error::InvalidMesh(format!("element references unknown node {id}")))
    };
    let cells = cells_raw
        .iter()
        .map(|c| Ok([lookup(c[0])?, lookup(c[1])?, lookup(c[2])?]))
        .collect::<Result<Vec<_>>>()?;
    let facets = facets_raw
        .iter()
        .map(|(v, tag)| {
            Ok(BoundaryFacet {
                vertices: [lookup(v[0])?, lookup(v[1])?],
                tag: *tag,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Mesh::new(points, cells, facets)
}

/// Serializes a mesh as Gmsh ASCII 2.2. Untagged facets are omitted; the
/// reader regenerates them.
pub fn to_string(mesh: &Mesh) -> String {
    let mut s = String::new();
    s.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n");
    let _ = writeln!(s, "{}", mesh.n_vertices());
    for (i, p) in mesh.vertices().iter().enumerate() {
        let _ = writeln!(s, "{} {:?} {:?} 0", i + 1, p[0], p[1]);
    }
    s.push_str("$EndNodes\n$Elements\n");
    let tagged: Vec<&BoundaryFacet> = mesh.boundary_facets().iter().filter(|f| f.tag != UNTAGGED).collect();
    let _ = writeln!(s, "{}", tagged.len() + mesh.n_cells());
    let mut id = 1;
    for f in tagged {
        let _ = writeln!(
            s,
            "{id} 1 2 {} {} {} {}",
            f.tag,
            f.tag,
            f.vertices[0] + 1,
            f.vertices[1] + 1
        );
        id += 1;
    }
    for c in mesh.cells() {
        let _ = writeln!(s, "{id} 2 2 0 1 {} {} {}", c[0] + 1, c[1] + 1, c[2] + 1);
        id += 1;
    }
    s.push_str("$EndElements\n");
    s
}

pub fn write_gmsh(mesh: &Mesh, path: &Path) -> Result<()> {
    std::fs::write(path, to_string(mesh)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUARE: &str = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 1 1 0\n4 0 1 0\n$EndNodes\n$Elements\n3\n1 1 2 3 1 1 2\n2 2 2 0 1 1 2 3\n3 2 2 0 1 1 3 4\n$EndElements\n";

    #[test]
    fn unit_square_file() {
        let m = parse(SQUARE).unwrap();
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_cells(), 2);
        assert!((m.total_area() - 1.0).abs() < 1e-15);
        assert_eq!(m.boundary_entities(3).facets.len(), 1);
        assert_eq!(m.load_report().untagged_facets, 3);
    }

    #[test]
    fn missing_nodes_section() {
        let text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Elements\n0\n$EndElements\n";
        assert!(matches!(parse(text), Err(Error::Parse { .. })));
    }

    #[test]
    fn malformed_header_names_line() {
        let text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodez\n";
        // unknown section never closed
        assert!(matches!(parse(text), Err(Error::Parse { .. })));
        let text = "$MeshFormat\n2.2 0 8\n$EndMeshFormt\n";
        match parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn version_four_rejected() {
        let text = "$MeshFormat\n4.1 0 8\n$EndMeshFormat\n";
        match parse(text) {
            Err(Error::UnsupportedFormat(msg)) => assert!(msg.contains("2.2")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn quads_rejected() {
        let text = SQUARE.replace("3 2 2 0 1 1 3 4", "3 3 2 0 1 1 2 3 4");
        assert!(matches!(parse(&text), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn nonzero_z_rejected() {
        let text = SQUARE.replace("4 0 1 0", "4 0 1 0.5");
        assert!(matches!(parse(&text), Err(Error::Parse { line: 9, .. })));
    }

    #[test]
    fn physical_names_are_skipped() {
        let text = SQUARE.replace(
            "$EndMeshFormat\n",
            "$EndMeshFormat\n$PhysicalNames\n1\n1 3 \"bottom\"\n$EndPhysicalNames\n",
        );
        assert_eq!(parse(&text).unwrap().n_cells(), 2);
    }
}
