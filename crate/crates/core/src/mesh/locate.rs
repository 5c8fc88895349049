use super::{Mesh, Point};

/// Bucket grid for locating points in cells.
///
/// Points outside the mesh (e.g. inside a slightly differently discretized
/// hole) are snapped to the nearest cell with clamped barycentric weights.
#[derive(Debug, Clone)]
pub struct PointLocator<'m> {
    mesh: &'m Mesh,
    origin: Point,
    cell_size: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl<'m> PointLocator<'m> {
    pub fn new(mesh: &'m Mesh) -> Self {
        let (lo, hi) = mesh.bounding_box();
        let n = (mesh.n_cells() as f64 / 2.0).sqrt().ceil().max(1.0) as usize;
        let dims = [n, n];
        let cell_size = [
            ((hi[0] - lo[0]) / n as f64).max(f64::MIN_POSITIVE),
            ((hi[1] - lo[1]) / n as f64).max(f64::MIN_POSITIVE),
        ];
        let mut buckets = vec![Vec::new(); n * n];
        let mut this = Self {
            mesh,
            origin: lo,
            cell_size,
            dims,
            buckets: Vec::new(),
        };
        for (c, cell) in mesh.cells().iter().enumerate() {
            let pts = cell.map(|v| mesh.vertices()[v]);
            let (mut bmin, mut bmax) = ([usize::MAX; 2], [0usize; 2]);
            for p in pts {
                let b = this.bucket_of(p);
                for d in 0..2 {
                    bmin[d] = bmin[d].min(b[d]);
                    bmax[d] = bmax[d].max(b[d]);
                }
            }
            for j in bmin[1]..=bmax[1] {
                for i in bmin[0]..=bmax[0] {
                    buckets[j * n + i].push(c);
                }
            }
        }
        this.buckets = buckets;
        this
    }

    fn bucket_of(&self, p: Point) -> [usize; 2] {
        [0, 1].map(|d| {
            let t = ((p[d] - self.origin[d]) / self.cell_size[d]).floor();
            (t.max(0.0) as usize).min(self.dims[d] - 1)
        })
    }

    fn barycentric(&self, cell: usize, p: Point) -> [f64; 3] {
        let [a, b, c] = self.mesh.cells()[cell].map(|v| self.mesh.vertices()[v]);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Cell containing `p` and its barycentric coordinates (clamped when `p`
    /// lies outside the mesh).
    pub fn locate(&self, p: Point) -> (usize, [f64; 3]) {
        let home = self.bucket_of(p);
        let mut best: Option<(f64, usize, [f64; 3])> = None;
        let max_ring = self.dims[0].max(self.dims[1]);
        for ring in 0..=max_ring {
            let lo = [0, 1].map(|d| home[d].saturating_sub(ring));
            let hi = [0, 1].map(|d| (home[d] + ring).min(self.dims[d] - 1));
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let on_ring = ring == 0 || i == lo[0] || i == hi[0] || j == lo[1] || j == hi[1];
                    if !on_ring {
                        continue;
                    }
                    for &c in &self.buckets[j * self.dims[0] + i] {
                        let l = self.barycentric(c, p);
                        let score = l[0].min(l[1]).min(l[2]);
                        if best.is_none_or(|(s, _, _)| score > s) {
                            best = Some((score, c, l));
                        }
                    }
                }
            }
            if let Some((score, c, l)) = best {
                if score >= -1e-12 {
                    return (c, l);
                }
                // one extra ring gives the nearest candidate a chance to improve
                if ring >= 1 {
                    let mut l = l.map(|v| v.max(0.0));
                    let s: f64 = l.iter().sum();
                    l.iter_mut().for_each(|v| *v /= s);
                    return (c, l);
                }
            }
        }
        unreachable!("mesh has at least one cell")
    }

    /// Evaluates a P1 (vertex-valued) field at `p`.
    pub fn interpolate_p1(&self, values: &[f64], p: Point) -> f64 {
        let (c, l) = self.locate(p);
        let cell = self.mesh.cells()[c];
        (0..3).map(|k| l[k] * values[cell[k]]).sum()
    }
}
