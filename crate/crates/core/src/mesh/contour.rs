use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use super::{TriMesh, Vec2, Vec3};
use crate::error::{Error, Result};

/// Closed simple polygon in the table plane, stored counter-clockwise.
/// Optional labels name individual contour points (anchors).
#[derive(Debug, Clone, PartialEq)]
pub struct Contour2D {
    points: Vec<Vec2>,
    labels: BTreeMap<String, usize>,
}

impl Contour2D {
    /// Validates simplicity and normalizes orientation to counter-clockwise.
    pub fn new(mut points: Vec<Vec2>) -> Result<Self> {
        if points.len() > 1 && (points[0] - points[points.len() - 1]).norm() < 1e-12 {
            points.pop();
        }
        if points.len() < 3 {
            return Err(Error::InvalidContour("fewer than three points".into()));
        }
        let n = points.len();
        for i in 0..n {
            if (points[i] - points[(i + 1) % n]).norm() < 1e-12 {
                return Err(Error::InvalidContour(format!("repeated point at {i}")));
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(&points[i], &points[(i + 1) % n], &points[j], &points[(j + 1) % n]) {
                    return Err(Error::InvalidContour(format!("segments {i} and {j} intersect")));
                }
            }
        }
        let mut c = Self { points, labels: BTreeMap::new() };
        if c.signed_area() < 0.0 {
            c.points.reverse();
        }
        if c.signed_area().abs() < 1e-12 {
            return Err(Error::InvalidContour("zero area".into()));
        }
        Ok(c)
    }

    /// Labels the contour point nearest to `at`.
    pub fn label_nearest(mut self, label: impl Into<String>, at: Vec2) -> Self {
        let i = self
            .points
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - at).norm_squared().total_cmp(&(b.1 - at).norm_squared()))
            .map(|(i, _)| i)
            .expect("non-empty contour");
        self.labels.insert(label.into(), i);
        self
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn labels(&self) -> &BTreeMap<String, usize> {
        &self.labels
    }

    /// Shoelace area, positive for counter-clockwise.
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|i| {
                let (a, b) = (self.points[i], self.points[(i + 1) % n]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
            * 0.5
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        let n = self.points.len();
        let mut inside = false;
        for i in 0..n {
            let (a, b) = (self.points[i], self.points[(i + 1) % n]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn distance_to_boundary(&self, p: &Vec2) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|i| point_segment_distance(p, &self.points[i], &self.points[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn bounds(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for p in &self.points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    pub fn diagonal(&self) -> f64 {
        let (lo, hi) = self.bounds();
        (hi - lo).norm()
    }
}

fn cross2(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn segments_intersect(p1: &Vec2, p2: &Vec2, q1: &Vec2, q2: &Vec2) -> bool {
    let d1 = cross2(&(q2 - q1), &(p1 - q1));
    let d2 = cross2(&(q2 - q1), &(p2 - q1));
    let d3 = cross2(&(p2 - p1), &(q1 - p1));
    let d4 = cross2(&(p2 - p1), &(q2 - p1));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |a: &Vec2, b: &Vec2, p: &Vec2, d: f64| {
        d.abs() < 1e-15 && p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

fn point_segment_distance(p: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Seed for the interior jitter; fixed so meshes are reproducible.
const JITTER_SEED: u64 = 0x5eed_c0de;
/// Jitter amplitude as a fraction of the grid spacing.
const JITTER_FRACTION: f64 = 0.1;

struct FlatTriangulation {
    points: Vec<Vec2>,
    /// Number of leading points that lie on the contour.
    boundary: usize,
    /// Contour point index → position in `points`.
    contour_index: Vec<usize>,
    triangles: Vec<[usize; 3]>,
}

fn triangulate(contour: &Contour2D, spacing: f64) -> Result<FlatTriangulation> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidContour("target edge length must be positive".into()));
    }
    let src = contour.points();
    let n = src.len();

    // Boundary: original points plus subdivision points on long segments.
    let mut boundary = Vec::new();
    let mut contour_index = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = (src[i], src[(i + 1) % n]);
        contour_index.push(boundary.len());
        boundary.push(a);
        let pieces = ((b - a).norm() / spacing).ceil().max(1.0) as usize;
        for k in 1..pieces {
            boundary.push(a + (b - a) * (k as f64 / pieces as f64));
        }
    }
    let nb = boundary.len();

    let mut rng = ChaCha8Rng::seed_from_u64(JITTER_SEED);
    let (lo, hi) = contour.bounds();
    let mut interior = Vec::new();
    let nx = ((hi.x - lo.x) / spacing).ceil() as usize + 1;
    let ny = ((hi.y - lo.y) / spacing).ceil() as usize + 1;
    for j in 0..ny {
        for i in 0..nx {
            let jx = rng.random_range(-JITTER_FRACTION..JITTER_FRACTION) * spacing;
            let jy = rng.random_range(-JITTER_FRACTION..JITTER_FRACTION) * spacing;
            let p = Vec2::new(lo.x + (i as f64 + 0.5) * spacing + jx, lo.y + (j as f64 + 0.5) * spacing + jy);
            if contour.contains(&p) && contour.distance_to_boundary(&p) >= 0.5 * spacing {
                interior.push(p);
            }
        }
    }

    let mut points: Vec<Vec2> = boundary.iter().chain(interior.iter()).copied().collect();
    let is_boundary_edge = |a: usize, b: usize| {
        a < nb && b < nb && ((a + 1) % nb == b || (b + 1) % nb == a)
    };

    for _round in 0..16 {
        let triangles = cdt(&points, nb)?;
        let kept: Vec<[usize; 3]> = triangles
            .into_iter()
            .filter(|t| {
                let (a, b, c) = (points[t[0]], points[t[1]], points[t[2]]);
                cross2(&(b - a), &(c - a)) > 1e-6 * spacing * spacing && contour.contains(&((a + b + c) / 3.0))
            })
            .collect();
        // Chords join two contour vertices through the interior; after
        // mirroring they would be shared by four faces. Split them.
        let mut chords = BTreeSet::new();
        for t in &kept {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                if a < nb && b < nb && !is_boundary_edge(a, b) {
                    chords.insert((a.min(b), a.max(b)));
                }
            }
        }
        if chords.is_empty() {
            return Ok(FlatTriangulation { points, boundary: nb, contour_index, triangles: kept });
        }
        for (a, b) in chords {
            let mut m = (points[a] + points[b]) * 0.5;
            if points.iter().any(|q| (q - m).norm() < 1e-9) {
                m = points[a] + (points[b] - points[a]) * 0.4;
            }
            points.push(m);
        }
    }
    Err(Error::InvalidContour("could not remove contour chords".into()))
}

fn cdt(points: &[Vec2], nb: usize) -> Result<Vec<[usize; 3]>> {
    let mut tri: ConstrainedDelaunayTriangulation<Point2<f64>> = ConstrainedDelaunayTriangulation::new();
    let mut handles = Vec::with_capacity(points.len());
    for p in points {
        let h = tri
            .insert(Point2::new(p.x, p.y))
            .map_err(|e| Error::InvalidContour(format!("triangulation failed: {e:?}")))?;
        handles.push(h);
    }
    let mut owner = vec![usize::MAX; tri.num_vertices()];
    for (i, h) in handles.iter().enumerate() {
        if owner[h.index()] != usize::MAX {
            return Err(Error::InvalidContour(format!("duplicate point {i}")));
        }
        owner[h.index()] = i;
    }
    for i in 0..nb {
        let (a, b) = (handles[i], handles[(i + 1) % nb]);
        if !tri.can_add_constraint(a, b) {
            return Err(Error::InvalidContour(format!("boundary edge {i} conflicts with the triangulation")));
        }
        tri.add_constraint(a, b);
    }
    let mut out = Vec::with_capacity(tri.num_inner_faces());
    for face in tri.inner_faces() {
        let vs = face.vertices();
        let mut t = [owner[vs[0].fix().index()], owner[vs[1].fix().index()], owner[vs[2].fix().index()]];
        let (a, b, c) = (points[t[0]], points[t[1]], points[t[2]]);
        if cross2(&(b - a), &(c - a)) < 0.0 {
            t.swap(1, 2);
        }
        out.push(t);
    }
    Ok(out)
}

/// One-sided flat triangulation of the contour in the plane `z = 0`, normals
/// up. Vertex `uv` holds the planar coordinates.
pub fn triangulate_contour(contour: &Contour2D, target_edge_len: f64) -> Result<TriMesh> {
    let flat = triangulate(contour, target_edge_len)?;
    let verts = flat.points.iter().map(|p| Vec3::new(p.x, p.y, 0.0)).collect();
    let anchors = contour.labels().iter().map(|(l, &i)| (l.clone(), flat.contour_index[i])).collect();
    TriMesh::new(verts, flat.triangles)?.with_anchors(anchors)?.with_uv(flat.points.clone())
}

/// Closed two-sided garment mesh from a contour: a flat triangulation is
/// mirrored into a top and bottom sheet that share the contour vertices.
///
/// The bottom sheet lies on `z = 0`, contour vertices sit at `z = d` and the
/// top sheet at `z = 2d`, with `d = 1e-3 ×` the contour's bounding-box diagonal.
/// Vertex layout: contour vertices, top interior, bottom interior.
pub fn mesh_from_contour(contour: &Contour2D, target_edge_len: f64) -> Result<TriMesh> {
    let flat = triangulate(contour, target_edge_len)?;
    let d = 1e-3 * contour.diagonal();
    let nb = flat.boundary;
    let ni = flat.points.len() - nb;

    let mut verts = Vec::with_capacity(nb + 2 * ni);
    let mut uv = Vec::with_capacity(nb + 2 * ni);
    for p in &flat.points[..nb] {
        verts.push(Vec3::new(p.x, p.y, d));
        uv.push(*p);
    }
    for p in &flat.points[nb..] {
        verts.push(Vec3::new(p.x, p.y, 2.0 * d));
        uv.push(*p);
    }
    for p in &flat.points[nb..] {
        verts.push(Vec3::new(p.x, p.y, 0.0));
        uv.push(*p);
    }
    let bottom = |i: usize| if i < nb { i } else { i + ni };
    let mut tris = Vec::with_capacity(2 * flat.triangles.len());
    tris.extend(flat.triangles.iter().copied());
    tris.extend(flat.triangles.iter().map(|t| [bottom(t[0]), bottom(t[2]), bottom(t[1])]));

    let anchors = contour.labels().iter().map(|(l, &i)| (l.clone(), flat.contour_index[i])).collect();
    TriMesh::new(verts, tris)?.with_anchors(anchors)?.with_uv(uv)
}
