//! Indexed triangle meshes and the geometric reductions the rest of the
//! toolkit is built on.
//!
//! The vertical axis is `+z` everywhere in this crate; the table used by the
//! cloth simulator is the plane `z = 0`.

mod contour;
pub mod garments;
mod obj;

use std::collections::{BTreeMap, HashMap};

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};

pub use contour::{mesh_from_contour, triangulate_contour, Contour2D};
pub use obj::{load_anchors, load_obj, save_anchors, save_obj};

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;

/// Triangles with area at or below this are rejected at construction (m²).
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Indexed triangle mesh with optional labeled anchor vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    anchors: BTreeMap<String, usize>,
    uv: Option<Vec<Vec2>>,
}

impl TriMesh {
    /// Builds a mesh, rejecting out-of-range indices and degenerate triangles.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} references vertex out of range (vertex count {n})"
                )));
            }
            let a = tri_area(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]);
            if !(a > DEGENERATE_AREA) {
                return Err(Error::InvalidMesh(format!("triangle {t} is degenerate (area {a:e})")));
            }
        }
        if let Some(v) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {v} is not finite")));
        }
        Ok(Self { vertices, triangles, anchors: BTreeMap::new(), uv: None })
    }

    /// Same connectivity and anchors, new vertex positions. No degeneracy check:
    /// deformed states produced by simulation or registration go through here.
    pub fn with_positions(&self, positions: Vec<Vec3>) -> Self {
        assert_eq!(positions.len(), self.vertices.len(), "vertex count must be preserved");
        Self { vertices: positions, ..self.clone() }
    }

    pub fn with_anchors(mut self, anchors: BTreeMap<String, usize>) -> Result<Self> {
        for (label, &i) in &anchors {
            if i >= self.vertices.len() {
                return Err(Error::InvalidMesh(format!("anchor {label} references vertex {i}")));
            }
        }
        self.anchors = anchors;
        Ok(self)
    }

    pub fn with_uv(mut self, uv: Vec<Vec2>) -> Result<Self> {
        if uv.len() != self.vertices.len() {
            return Err(Error::InvalidMesh("uv count differs from vertex count".into()));
        }
        self.uv = Some(uv);
        Ok(self)
    }

    pub fn set_anchor(&mut self, label: impl Into<String>, vertex: usize) -> Result<()> {
        if vertex >= self.vertices.len() {
            return Err(Error::InvalidMesh(format!("anchor vertex {vertex} out of range")));
        }
        self.anchors.insert(label.into(), vertex);
        Ok(())
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn vertices_mut(&mut self) -> &mut [Vec3] {
        &mut self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn anchors(&self) -> &BTreeMap<String, usize> {
        &self.anchors
    }

    pub fn anchor(&self, label: &str) -> Option<usize> {
        self.anchors.get(label).copied()
    }

    pub fn uv(&self) -> Option<&[Vec2]> {
        self.uv.as_deref()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        tri_area(&a, &b, &c)
    }

    pub fn barycenter(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.corners(t);
        (a + b + c) / 3.0
    }

    /// Unit normal following the triangle's winding.
    pub fn triangle_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.corners(t);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn areas(&self) -> Vec<f64> {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).collect()
    }

    pub fn barycenters(&self) -> Vec<Vec3> {
        (0..self.triangles.len()).map(|t| self.barycenter(t)).collect()
    }

    pub fn total_area(&self) -> f64 {
        self.areas().iter().sum()
    }

    pub fn has_same_connectivity(&self, other: &TriMesh) -> bool {
        self.vertices.len() == other.vertices.len() && self.triangles == other.triangles
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    /// Area-weighted center `Σ aᵢgᵢ / Σ aᵢ`.
    pub fn area_weighted_center(&self) -> Result<Vec3> {
        if self.is_empty() {
            return Err(Error::InvalidMesh("empty mesh has no center".into()));
        }
        let mut acc = Vec3::zeros();
        let mut total = 0.0;
        for t in 0..self.triangles.len() {
            let a = self.triangle_area(t);
            acc += self.barycenter(t) * a;
            total += a;
        }
        Ok(acc / total)
    }

    /// Area-weighted mean distance of triangle barycenters from the
    /// area-weighted center.
    pub fn representative_size(&self) -> Result<f64> {
        let c = self.area_weighted_center()?;
        let mut acc = 0.0;
        let mut total = 0.0;
        for t in 0..self.triangles.len() {
            let a = self.triangle_area(t);
            acc += (self.barycenter(t) - c).norm() * a;
            total += a;
        }
        Ok(acc / total)
    }

    pub fn map_positions(&self, f: impl Fn(&Vec3) -> Vec3) -> TriMesh {
        self.with_positions(self.vertices.iter().map(f).collect())
    }

    pub fn translated(&self, d: &Vec3) -> TriMesh {
        self.map_positions(|v| v + d)
    }

    pub fn scaled_about(&self, center: &Vec3, factor: f64) -> TriMesh {
        self.map_positions(|v| center + (v - center) * factor)
    }

    /// Reverses the winding of every triangle.
    pub fn flipped(&self) -> TriMesh {
        let mut out = self.clone();
        for t in &mut out.triangles {
            t.swap(1, 2);
        }
        out
    }

    /// Undirected edge → incident triangles.
    pub fn edge_faces(&self) -> HashMap<(usize, usize), Vec<usize>> {
        let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                map.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        map
    }

    /// Interior edges as `(a, b, opposite_in_t0, opposite_in_t1)`, sorted for
    /// deterministic iteration. `a → b` follows the winding of the first face.
    pub fn hinges(&self) -> Vec<Hinge> {
        let mut out = Vec::new();
        let mut edges: Vec<_> = self.edge_faces().into_iter().filter(|(_, f)| f.len() == 2).collect();
        edges.sort_unstable();
        for ((_, _), faces) in edges {
            let (t0, t1) = (faces[0], faces[1]);
            let tri0 = self.triangles[t0];
            let tri1 = self.triangles[t1];
            // Find the directed edge a→b as it appears in t0.
            let mut found = None;
            for k in 0..3 {
                let (a, b, c) = (tri0[k], tri0[(k + 1) % 3], tri0[(k + 2) % 3]);
                if tri1.contains(&a) && tri1.contains(&b) {
                    found = Some((a, b, c));
                }
            }
            let (a, b, c) = found.expect("edge shared by both faces");
            let d = *tri1.iter().find(|&&v| v != a && v != b).expect("opposite vertex");
            out.push(Hinge { a, b, left: c, right: d, faces: [t0, t1] });
        }
        out
    }

    /// True when every edge is shared by exactly two triangles.
    pub fn is_closed_manifold(&self) -> bool {
        !self.is_empty() && self.edge_faces().values().all(|f| f.len() == 2)
    }

    pub fn euler_characteristic(&self) -> i64 {
        let used: std::collections::BTreeSet<usize> = self.triangles.iter().flatten().copied().collect();
        used.len() as i64 - self.edge_faces().len() as i64 + self.triangles.len() as i64
    }

    /// Vertex–vertex adjacency lists, sorted.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for &(a, b) in self.edge_faces().keys() {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn nearest_vertex(&self, p: &Vec3) -> Option<usize> {
        self.vertices
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - p).norm_squared().total_cmp(&(b.1 - p).norm_squared()))
            .map(|(i, _)| i)
    }

    /// Keeps only the triangles whose three vertices satisfy `keep`, then
    /// drops unreferenced vertices. Anchors on removed vertices are dropped.
    pub fn filter_vertices(&self, keep: impl Fn(usize) -> bool) -> Result<TriMesh> {
        let tris: Vec<[usize; 3]> =
            self.triangles.iter().copied().filter(|t| t.iter().all(|&i| keep(i))).collect();
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut verts = Vec::new();
        for t in &tris {
            for &i in t {
                if remap[i] == usize::MAX {
                    remap[i] = verts.len();
                    verts.push(self.vertices[i]);
                }
            }
        }
        let tris = tris.into_iter().map(|t| t.map(|i| remap[i])).collect();
        let anchors = self
            .anchors
            .iter()
            .filter(|(_, &i)| remap[i] != usize::MAX)
            .map(|(l, &i)| (l.clone(), remap[i]))
            .collect();
        TriMesh::new(verts, tris)?.with_anchors(anchors)
    }
}

/// Interior edge with its two incident faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hinge {
    pub a: usize,
    pub b: usize,
    /// Vertex opposite the edge in `faces[0]`.
    pub left: usize,
    /// Vertex opposite the edge in `faces[1]`.
    pub right: usize,
    pub faces: [usize; 2],
}

pub fn tri_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Unit icosphere subdivided `levels` times, scaled to `radius` about `center`.
pub fn icosphere(center: &Vec3, radius: f64, levels: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Vec3::new(p[0], p[1], p[2]).normalize())
    .collect();
    let mut tris: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..levels {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(tris.len() * 4);
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        for [a, b, c] in tris {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        tris = next;
    }
    let verts = verts.into_iter().map(|v| center + v * radius).collect();
    TriMesh::new(verts, tris).expect("icosphere is valid")
}

/// Closed axis-aligned box, outward winding.
pub fn box_mesh(min: &Vec3, max: &Vec3) -> TriMesh {
    let v = |x: usize, y: usize, z: usize| {
        Vec3::new(
            if x == 0 { min.x } else { max.x },
            if y == 0 { min.y } else { max.y },
            if z == 0 { min.z } else { max.z },
        )
    };
    let verts = vec![
        v(0, 0, 0),
        v(1, 0, 0),
        v(1, 1, 0),
        v(0, 1, 0),
        v(0, 0, 1),
        v(1, 0, 1),
        v(1, 1, 1),
        v(0, 1, 1),
    ];
    let tris = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    TriMesh::new(verts, tris).expect("box is valid")
}

/// Closed cylinder around the vertical axis through `(cx, cy)`.
pub fn cylinder_mesh(cx: f64, cy: f64, radius: f64, z0: f64, z1: f64, segments: usize) -> TriMesh {
    let mut verts = Vec::with_capacity(2 * segments + 2);
    for &z in &[z0, z1] {
        for k in 0..segments {
            let a = std::f64::consts::TAU * k as f64 / segments as f64;
            verts.push(Vec3::new(cx + radius * a.cos(), cy + radius * a.sin(), z));
        }
    }
    let bottom = verts.len();
    verts.push(Vec3::new(cx, cy, z0));
    let top = verts.len();
    verts.push(Vec3::new(cx, cy, z1));
    let mut tris = Vec::new();
    for k in 0..segments {
        let k1 = (k + 1) % segments;
        tris.push([k, k1, segments + k1]);
        tris.push([k, segments + k1, segments + k]);
        tris.push([bottom, k1, k]);
        tris.push([top, segments + k, segments + k1]);
    }
    TriMesh::new(verts, tris).expect("cylinder is valid")
}

/// Flat rectangular grid sheet in the plane `z = height`, `nx × ny` quads.
pub fn grid_sheet(width: f64, depth: f64, nx: usize, ny: usize, height: f64) -> TriMesh {
    let mut verts = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            verts.push(Vec3::new(width * i as f64 / nx as f64, depth * j as f64 / ny as f64, height));
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut tris = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            tris.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            tris.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriMesh::new(verts, tris).expect("grid is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    fn unit_square() -> TriMesh {
        grid_sheet(1.0, 1.0, 1, 1, 0.0)
    }

    #[test]
    fn center_of_unit_square() {
        let c = unit_square().area_weighted_center().unwrap();
        assert!((c - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn single_triangle_center_and_size() {
        let m = TriMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!((m.area_weighted_center().unwrap() - m.barycenter(0)).norm() < 1e-15);
        assert!(m.representative_size().unwrap().abs() < 1e-15);
    }

    #[test]
    fn l_shape_center_matches_hand_sum() {
        // Three right triangles: legs 1 (area 0.5), the third with legs 2 (area 2).
        let verts = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(0.0, 3.0, 0.0),
        ];
        let m = TriMesh::new(verts, vec![[0, 1, 2], [1, 3, 2], [2, 3, 4]]).unwrap();
        // Hand sum: g0=(1/3,1/3) a=.5; g1=(2/3,2/3) a=.5; g2=(1/3,5/3) a=1.
        // Σag = (1/6+1/3+1/3, 1/6+1/3+5/3) = (5/6, 13/6); Σa = 2.
        let c = m.area_weighted_center().unwrap();
        assert!((c - Vec3::new(5.0 / 12.0, 13.0 / 12.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn unit_square_representative_size() {
        // Barycenters (2/3,1/3) and (1/3,2/3), equal areas, c = (.5,.5):
        // each at distance sqrt(2)/6.
        let l = unit_square().representative_size().unwrap();
        assert!((l - 2f64.sqrt() / 6.0).abs() < 1e-15);
    }

    #[test]
    fn size_is_homogeneous_and_rigid_invariant() {
        let m = icosphere(&Vec3::new(0.1, 0.2, 0.3), 0.4, 1);
        let l = m.representative_size().unwrap();
        let c = m.area_weighted_center().unwrap();
        let scaled = m.scaled_about(&Vec3::zeros(), 2.0);
        assert!((scaled.representative_size().unwrap() - 2.0 * l).abs() < 1e-12);

        let r = Rotation3::from_euler_angles(0.3, -0.7, 1.1);
        let t = Vec3::new(1.0, -2.0, 0.5);
        let moved = m.map_positions(|v| r * v + t);
        assert!((moved.representative_size().unwrap() - l).abs() < 1e-9);
        assert!((moved.area_weighted_center().unwrap() - (r * c + t)).norm() < 1e-9);
    }

    #[test]
    fn empty_mesh_is_rejected() {
        let m = TriMesh::new(vec![], vec![]).unwrap();
        assert!(matches!(m.area_weighted_center(), Err(Error::InvalidMesh(_))));
        assert!(matches!(m.representative_size(), Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn degenerate_and_out_of_range_triangles_rejected() {
        let v = vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)];
        assert!(TriMesh::new(v.clone(), vec![[0, 1, 2]]).is_err());
        assert!(TriMesh::new(v, vec![[0, 1, 3]]).is_err());
    }

    #[test]
    fn closed_primitives_are_manifold() {
        for m in [icosphere(&Vec3::zeros(), 1.0, 2), box_mesh(&Vec3::zeros(), &Vec3::repeat(1.0)), cylinder_mesh(0.0, 0.0, 1.0, 0.0, 1.0, 12)] {
            assert!(m.is_closed_manifold());
            assert_eq!(m.euler_characteristic(), 2);
        }
        assert!(!grid_sheet(1.0, 1.0, 3, 3, 0.0).is_closed_manifold());
    }

    #[test]
    fn closest_point_regions() {
        let a = Vec3::zeros();
        let b = Vec3::new(1.0, 0.0, 0.0);
        let c = Vec3::new(0.0, 1.0, 0.0);
        assert_eq!(closest_point_on_triangle(&Vec3::new(-1.0, -1.0, 0.0), &a, &b, &c), a);
        let p = closest_point_on_triangle(&Vec3::new(0.25, 0.25, 3.0), &a, &b, &c);
        assert!((p - Vec3::new(0.25, 0.25, 0.0)).norm() < 1e-15);
        let p = closest_point_on_triangle(&Vec3::new(1.0, 1.0, 0.0), &a, &b, &c);
        assert!((p - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-15);
    }
}
