//! Oriented triangle meshes whose boundary lies (mostly) on the wall `{x3 = 0}`.
//!
//! Boundary loops are stored in the orientation induced by the triangles, so
//! walking along a loop the surface lies to the left when seen from the side
//! the normals point to. For outward-oriented caps this makes every wall loop
//! counterclockwise seen from `+E3`.
//!
//! Besides wall vertices a boundary may carry *truncation* vertices: boundary
//! points off the wall, or the corners where a wall chain meets an off-wall
//! chain. They appear on compact samples of unbounded surfaces and on flat
//! test patches; all variational modules keep them fixed.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use crate::error::{Error, Result};
use crate::numeric::pairwise_sum_by;
use crate::{Vec3, E3};

/// Tolerance for snapping boundary heights onto the wall.
pub const WALL_SNAP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexKind {
    Interior,
    /// Boundary vertex on the wall whose two boundary edges both lie on the wall.
    Wall,
    /// Any other boundary vertex.
    Truncation,
}

/// Connectivity shared between meshes with the same triangles.
#[derive(Debug)]
pub struct Topology {
    triangles: Vec<[usize; 3]>,
    loops: Vec<Vec<usize>>,
    kinds: Vec<VertexKind>,
    vertex_faces: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
    /// `(loop, position)` for boundary vertices.
    loop_pos: Vec<Option<(usize, usize)>>,
}

/// An oriented triangle mesh in three-space.
#[derive(Debug, Clone)]
pub struct CapillaryMesh {
    vertices: Vec<Vec3>,
    topo: Arc<Topology>,
}

impl CapillaryMesh {
    /// Build and validate a mesh: manifold with boundary, consistently
    /// oriented, no isolated vertices and no degenerate triangles. Boundary
    /// heights within [`WALL_SNAP`] of zero are snapped onto the wall.
    pub fn new(mut vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no triangles".into()));
        }
        let mut directed: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (f, t) in triangles.iter().enumerate() {
            if t.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!("triangle {f} references a missing vertex")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::DegenerateTriangle { face: f, area: 0.0 });
            }
            for k in 0..3 {
                let e = (t[k], t[(k + 1) % 3]);
                if directed.insert(e, f).is_some() {
                    return Err(Error::InvalidMesh(format!(
                        "edge ({}, {}) is used twice with the same orientation (non-manifold or inconsistent orientation)",
                        e.0, e.1
                    )));
                }
            }
        }
        let mut vertex_faces = vec![Vec::new(); n];
        for (f, t) in triangles.iter().enumerate() {
            for &i in t {
                vertex_faces[i].push(f);
            }
        }
        if let Some(i) = vertex_faces.iter().position(|v| v.is_empty()) {
            return Err(Error::InvalidMesh(format!("vertex {i} is isolated")));
        }

        // Boundary edges are directed edges without a twin.
        let mut next: Vec<Option<usize>> = vec![None; n];
        for &(a, b) in directed.keys() {
            if !directed.contains_key(&(b, a)) {
                if next[a].is_some() {
                    return Err(Error::InvalidMesh(format!("boundary is pinched at vertex {a}")));
                }
                next[a] = Some(b);
            }
        }
        let mut loops = Vec::new();
        let mut loop_pos = vec![None; n];
        for start in 0..n {
            if next[start].is_none() || loop_pos[start].is_some() {
                continue;
            }
            let li = loops.len();
            let mut cycle = Vec::new();
            let mut v = start;
            loop {
                if loop_pos[v].is_some() {
                    return Err(Error::InvalidMesh(format!("boundary loop through vertex {v} is not a simple cycle")));
                }
                loop_pos[v] = Some((li, cycle.len()));
                cycle.push(v);
                v = next[v].ok_or_else(|| Error::InvalidMesh(format!("open boundary chain at vertex {v}")))?;
                if v == start {
                    break;
                }
            }
            loops.push(cycle);
        }

        for (i, p) in loop_pos.iter().enumerate() {
            if p.is_some() && vertices[i].z.abs() <= WALL_SNAP {
                vertices[i].z = 0.0;
            }
        }
        let kinds = classify(&vertices, &loops, &loop_pos);

        let mut neighbors = vec![Vec::new(); n];
        for t in &triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                if !neighbors[a].contains(&b) {
                    neighbors[a].push(b);
                }
                if !neighbors[b].contains(&a) {
                    neighbors[b].push(a);
                }
            }
        }

        let mesh = Self {
            vertices,
            topo: Arc::new(Topology { triangles, loops, kinds, vertex_faces, neighbors, loop_pos }),
        };
        mesh.check_triangle_areas()?;
        Ok(mesh)
    }

    /// Same connectivity with new positions. Wall vertices are snapped back
    /// onto the plane; everything else is taken as given.
    pub fn with_vertices(&self, mut vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::InvalidMesh("vertex count changed".into()));
        }
        for (i, k) in self.topo.kinds.iter().enumerate() {
            if *k == VertexKind::Wall {
                vertices[i].z = 0.0;
            }
        }
        let mesh = Self { vertices, topo: self.topo.clone() };
        mesh.check_triangle_areas()?;
        Ok(mesh)
    }

    fn check_triangle_areas(&self) -> Result<()> {
        let diag = self.bbox_diagonal();
        let floor = 1e-14 * diag * diag;
        for f in 0..self.num_faces() {
            let a = self.face_area(f);
            if !(a >= floor) {
                return Err(Error::DegenerateTriangle { face: f, area: a });
            }
        }
        Ok(())
    }

    /// Strict half-space invariants: every boundary vertex is a wall vertex
    /// and every interior vertex lies strictly above the wall.
    pub fn validate_half_space(&self) -> Result<()> {
        for (i, k) in self.topo.kinds.iter().enumerate() {
            match k {
                VertexKind::Truncation => {
                    return Err(Error::InvalidMesh(format!("boundary vertex {i} is off the wall")));
                }
                VertexKind::Interior if !(self.vertices[i].z > 0.0) => {
                    return Err(Error::InvalidMesh(format!("interior vertex {i} is not above the wall")));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.topo.triangles
    }

    /// Boundary loops in induced orientation.
    pub fn boundary_loops(&self) -> &[Vec<usize>] {
        &self.topo.loops
    }

    pub fn kinds(&self) -> &[VertexKind] {
        &self.topo.kinds
    }

    pub fn kind(&self, v: usize) -> VertexKind {
        self.topo.kinds[v]
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.topo.loop_pos[v].is_some()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.topo.triangles.len()
    }

    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.topo.vertex_faces[v]
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.topo.neighbors[v]
    }

    /// Previous and next vertex along the boundary loop through `v`.
    pub fn boundary_prev_next(&self, v: usize) -> Option<(usize, usize)> {
        let (l, p) = self.topo.loop_pos[v]?;
        let lp = &self.topo.loops[l];
        let m = lp.len();
        Some((lp[(p + m - 1) % m], lp[(p + 1) % m]))
    }

    /// Directed boundary edges `(a, b)` following the loops.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for lp in &self.topo.loops {
            for k in 0..lp.len() {
                out.push((lp[k], lp[(k + 1) % lp.len()]));
            }
        }
        out
    }

    /// Boundary edges with both endpoints on the wall.
    pub fn wall_edges(&self) -> Vec<(usize, usize)> {
        self.boundary_edges()
            .into_iter()
            .filter(|&(a, b)| self.vertices[a].z == 0.0 && self.vertices[b].z == 0.0)
            .collect()
    }

    pub fn has_truncation(&self) -> bool {
        self.topo.kinds.contains(&VertexKind::Truncation)
    }

    /// Vertices whose position may vary in energy minimization and in the
    /// stability form (interior and wall vertices).
    pub fn free_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&v| self.kind(v) != VertexKind::Truncation).collect()
    }

    /// Area-weighted normal `(x1 - x0) x (x2 - x0) / 2`.
    pub fn face_vector_area(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.topo.triangles[f];
        let (p0, p1, p2) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        (p1 - p0).cross(&(p2 - p0)) * 0.5
    }

    pub fn face_area(&self, f: usize) -> f64 {
        self.face_vector_area(f).norm()
    }

    pub fn face_normal(&self, f: usize) -> Vec3 {
        self.face_vector_area(f).normalize()
    }

    pub fn face_areas(&self) -> Vec<f64> {
        (0..self.num_faces()).map(|f| self.face_area(f)).collect()
    }

    pub fn face_centroid(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.topo.triangles[f];
        (self.vertices[a] + self.vertices[b] + self.vertices[c]) / 3.0
    }

    /// Barycentric (one third of incident face areas) vertex areas.
    pub fn vertex_areas(&self) -> Vec<f64> {
        let fa = self.face_areas();
        (0..self.num_vertices())
            .map(|v| self.topo.vertex_faces[v].iter().map(|&f| fa[f]).sum::<f64>() / 3.0)
            .collect()
    }

    pub fn total_area(&self) -> f64 {
        pairwise_sum_by(self.num_faces(), |f| self.face_area(f))
    }

    /// Angle-weighted vertex normals.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut acc = vec![Vec3::zeros(); self.num_vertices()];
        for (f, t) in self.topo.triangles.iter().enumerate() {
            let n = self.face_normal(f);
            for k in 0..3 {
                let p = self.vertices[t[k]];
                let u = self.vertices[t[(k + 1) % 3]] - p;
                let w = self.vertices[t[(k + 2) % 3]] - p;
                let ang = u.cross(&w).norm().atan2(u.dot(&w));
                acc[t[k]] += n * ang;
            }
        }
        acc.into_iter().map(|v| v.normalize()).collect()
    }

    /// Length of the bounding-box diagonal.
    pub fn bbox_diagonal(&self) -> f64 {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in &self.vertices {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (hi - lo).norm()
    }

    /// Mean edge length, used as the mesh size `h`.
    pub fn mean_edge_length(&self) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for t in &self.topo.triangles {
            for k in 0..3 {
                sum += (self.vertices[t[k]] - self.vertices[t[(k + 1) % 3]]).norm();
                count += 1;
            }
        }
        sum / count as f64
    }

    /// Smallest triangle quality `4 sqrt(3) A / (sum of squared edges)`,
    /// which is 1 for equilateral triangles.
    pub fn min_quality(&self) -> f64 {
        let mut q = f64::INFINITY;
        for (f, t) in self.topo.triangles.iter().enumerate() {
            let mut s = 0.0;
            for k in 0..3 {
                s += (self.vertices[t[k]] - self.vertices[t[(k + 1) % 3]]).norm_squared();
            }
            q = q.min(4.0 * 3f64.sqrt() * self.face_area(f) / s);
        }
        q
    }

    /// Vertices within `rings` edge hops of `v` (excluding `v`), in BFS order.
    pub fn ring(&self, v: usize, rings: usize) -> Vec<usize> {
        let mut seen = alloc::collections::BTreeSet::new();
        seen.insert(v);
        let mut frontier = vec![v];
        let mut out = Vec::new();
        for _ in 0..rings {
            let mut nf = Vec::new();
            for &u in &frontier {
                for &w in &self.topo.neighbors[u] {
                    if seen.insert(w) {
                        nf.push(w);
                        out.push(w);
                    }
                }
            }
            frontier = nf;
        }
        out
    }

    /// Uniform 1-to-4 midpoint subdivision. `project` may move each new
    /// midpoint (e.g. back onto an analytic surface).
    pub fn refine<P: Fn(&Vec3, bool) -> Vec3>(&self, project: P) -> Result<Self> {
        let mut verts = self.vertices.clone();
        let mut mid: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let boundary: alloc::collections::BTreeSet<(usize, usize)> =
            self.boundary_edges().into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        let mut get = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                let m = (verts[a] + verts[b]) * 0.5;
                verts.push(project(&m, boundary.contains(&key)));
                verts.len() - 1
            })
        };
        let mut tris = Vec::with_capacity(4 * self.num_faces());
        for &[a, b, c] in &self.topo.triangles {
            let ab = get(a, b, &mut verts);
            let bc = get(b, c, &mut verts);
            let ca = get(c, a, &mut verts);
            tris.push([a, ab, ca]);
            tris.push([ab, b, bc]);
            tris.push([ca, bc, c]);
            tris.push([ab, bc, ca]);
        }
        Self::new(verts, tris)
    }

    /// Enclosed volume `(1/3) int <x, nu> dA`, closed by the planar lid.
    pub fn enclosed_volume(&self) -> f64 {
        pairwise_sum_by(self.num_faces(), |f| {
            let [a, b, c] = self.topo.triangles[f];
            self.vertices[a].dot(&self.vertices[b].cross(&self.vertices[c])) / 6.0
        })
    }

    /// Signed planar area enclosed by the wall edges, `1/2 sum (x_a x x_b) . E3`.
    pub fn wetted_area(&self) -> f64 {
        let edges = self.wall_edges();
        pairwise_sum_by(edges.len(), |k| {
            let (a, b) = edges[k];
            0.5 * self.vertices[a].cross(&self.vertices[b]).dot(&E3)
        })
    }

    /// Apply `map` to every vertex, keeping connectivity.
    pub fn map_vertices<M: Fn(&Vec3) -> Vec3>(&self, map: M) -> Result<Self> {
        let v = self.vertices.iter().map(map).collect();
        self.with_vertices(v)
    }
}

fn classify(vertices: &[Vec3], loops: &[Vec<usize>], loop_pos: &[Option<(usize, usize)>]) -> Vec<VertexKind> {
    let on_wall = |i: usize| vertices[i].z == 0.0;
    (0..vertices.len())
        .map(|i| match loop_pos[i] {
            None => VertexKind::Interior,
            Some((l, p)) => {
                let lp = &loops[l];
                let m = lp.len();
                let (prev, next) = (lp[(p + m - 1) % m], lp[(p + 1) % m]);
                if on_wall(i) && on_wall(prev) && on_wall(next) {
                    VertexKind::Wall
                } else {
                    VertexKind::Truncation
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Square pyramid without base: four triangles, boundary on the wall.
    fn pyramid() -> CapillaryMesh {
        let v = vec![
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(0.0, -1.0, 1e-13),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let t = vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]];
        CapillaryMesh::new(v, t).unwrap()
    }

    #[test]
    fn pyramid_topology_and_measures() {
        let m = pyramid();
        assert_eq!(m.boundary_loops().len(), 1);
        assert_eq!(m.boundary_loops()[0].len(), 4);
        assert_eq!(m.vertices()[3].z, 0.0);
        assert_eq!(m.kind(4), VertexKind::Interior);
        assert!((0..4).all(|i| m.kind(i) == VertexKind::Wall));
        m.validate_half_space().unwrap();
        // Square of diagonal 2 has area 2; pyramid over it of height 1 has volume 2/3.
        assert_abs_diff_eq!(m.wetted_area(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.enclosed_volume(), 2.0 / 3.0, epsilon = 1e-15);
        let va: f64 = m.vertex_areas().iter().sum();
        assert_abs_diff_eq!(va, m.total_area(), epsilon = 1e-14);
        assert_eq!(m.boundary_prev_next(0), Some((3, 1)));
    }

    #[test]
    fn refinement_preserves_measures_of_flat_pieces() {
        let m = pyramid();
        let r = m.refine(|p, _| *p).unwrap();
        assert_eq!(r.num_faces(), 16);
        assert_abs_diff_eq!(r.total_area(), m.total_area(), epsilon = 1e-14);
        assert_abs_diff_eq!(r.enclosed_volume(), m.enclosed_volume(), epsilon = 1e-14);
        assert_abs_diff_eq!(r.wetted_area(), 2.0, epsilon = 1e-14);
        assert_eq!(r.boundary_loops()[0].len(), 8);
    }

    #[test]
    fn rejects_bad_meshes() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()];
        assert!(matches!(
            CapillaryMesh::new(v.clone(), vec![[0, 1, 2]]),
            Err(Error::InvalidMesh(_))
        ));
        let deg = vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0];
        assert!(matches!(CapillaryMesh::new(deg, vec![[0, 1, 2]]), Err(Error::DegenerateTriangle { .. })));
        let flipped = vec![[0, 1, 2], [0, 1, 3]];
        assert!(CapillaryMesh::new(v, flipped).is_err());
    }

    #[test]
    fn off_wall_boundary_is_truncation() {
        let v = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 1.0)];
        let m = CapillaryMesh::new(v, vec![[0, 1, 2]]).unwrap();
        assert!(m.kinds().iter().all(|k| *k == VertexKind::Truncation));
        assert_eq!(m.wall_edges(), vec![(0, 1)]);
        assert!(m.validate_half_space().is_err());
    }
}
