//! Voxel distance fields that carry, per grid node, the distance to a mesh and
//! the closest surface point itself.
//!
//! Nodes within a two-voxel band of the surface are seeded with exact
//! point–triangle distances; everything else is filled by fast sweeping, which
//! propagates `(distance, closest point)` pairs from upwind neighbours
//! (re-evaluated exactly against the neighbour's source triangle) over the
//! eight axis-octant orderings until nothing changes by more than 1e-6 m.
//! Queries then look at the eight nodes around a point and return the best of
//! their stored closest points, so each lookup is O(1).

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{closest_point_on_triangle, TriMesh, Vec3};

/// Grid resolution used when none is requested (voxels per meter).
pub const DEFAULT_RESOLUTION: f64 = 384.0;
/// Reference grid dimensions for a full hanging-garment workspace at the
/// default resolution. Fitted grids are used in practice.
pub const DEFAULT_DIMS: [usize; 3] = [384, 768, 768];

const NARROW_BAND_VOXELS: f64 = 2.0;
const SWEEP_TOLERANCE: f64 = 1e-6;
const MAX_SWEEP_PASSES: usize = 64;

/// Regular grid: node `(i, j, k)` sits at `origin + (i, j, k) / resolution`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub resolution: f64,
    pub origin: Vec3,
}

impl GridSpec {
    pub fn new(dims: [usize; 3], resolution: f64, origin: Vec3) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::Domain(format!("grid dims must be at least 2 per axis, got {dims:?}")));
        }
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::Domain(format!("resolution must be positive, got {resolution}")));
        }
        Ok(Self { dims, resolution, origin })
    }

    /// Fits the mesh bounding box plus 5% padding (at least two voxels) at the
    /// given resolution.
    pub fn fit(mesh: &TriMesh, resolution: f64) -> Result<Self> {
        if mesh.is_empty() {
            return Err(Error::InvalidMesh("cannot fit a grid to an empty mesh".into()));
        }
        let (lo, hi) = mesh.bounds();
        let h = 1.0 / resolution;
        let pad = (hi - lo).map(|e| (0.05 * e).max(2.0 * h));
        let lo = lo - pad;
        let hi = hi + pad;
        let dims = [0, 1, 2].map(|a| (((hi[a] - lo[a]) * resolution).ceil() as usize + 1).max(2));
        Self::new(dims, resolution, lo)
    }

    /// Fits a cubic-ish grid with `nodes` samples along the longest axis.
    pub fn fit_nodes(mesh: &TriMesh, nodes: usize) -> Result<Self> {
        let (lo, hi) = mesh.bounds();
        let extent = (hi - lo).max() * 1.1;
        let res = (nodes.saturating_sub(5)) as f64 / extent.max(1e-9);
        Self::fit(mesh, res)
    }

    pub fn voxel_size(&self) -> f64 {
        1.0 / self.resolution
    }

    pub fn voxel_diagonal(&self) -> f64 {
        3f64.sqrt() * self.voxel_size()
    }

    pub fn node_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Linear index, x fastest.
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) / self.resolution
    }

    pub fn max_corner(&self) -> Vec3 {
        self.node_position(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let hi = self.max_corner();
        (0..3).all(|a| p[a] >= self.origin[a] && p[a] <= hi[a])
    }

    /// Nearest grid node, or `None` outside the grid.
    pub fn nearest_node(&self, p: &Vec3) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        let g = (p - self.origin) * self.resolution;
        let c = [0, 1, 2].map(|a| (g[a].round() as usize).min(self.dims[a] - 1));
        Some(self.index(c[0], c[1], c[2]))
    }
}

/// Unsigned distance plus closest surface point per node; optionally signs.
#[derive(Debug, Clone)]
pub struct DistanceField {
    spec: GridSpec,
    distance: Vec<f64>,
    closest: Vec<Vec3>,
    /// Triangle that produced `closest`, used to refine candidates while sweeping.
    source: Vec<u32>,
    sign: Option<Vec<i8>>,
    surface: Arc<Surface>,
}

/// Copy of the meshed surface kept for exact re-projection at query time.
#[derive(Debug)]
struct Surface {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    vertex_triangles: Vec<Vec<u32>>,
}

impl Surface {
    fn new(mesh: &TriMesh) -> Self {
        let mut vertex_triangles = vec![Vec::new(); mesh.vertex_count()];
        for (t, tri) in mesh.triangles().iter().enumerate() {
            for &v in tri {
                vertex_triangles[v].push(t as u32);
            }
        }
        Self { vertices: mesh.vertices().to_vec(), triangles: mesh.triangles().to_vec(), vertex_triangles }
    }

    fn project(&self, t: u32, p: &Vec3) -> Vec3 {
        let [a, b, c] = self.triangles[t as usize];
        closest_point_on_triangle(p, &self.vertices[a], &self.vertices[b], &self.vertices[c])
    }
}

/// A distance field whose nodes also carry inside/outside information.
#[derive(Debug, Clone)]
pub struct SignedDistanceField(DistanceField);

/// Builds the unsigned field with closest points. Uses a fitted grid at the
/// default resolution when `spec` is `None`.
pub fn build_distance_field(mesh: &TriMesh, spec: Option<GridSpec>) -> Result<DistanceField> {
    let spec = match spec {
        Some(s) => s,
        None => GridSpec::fit(mesh, DEFAULT_RESOLUTION)?,
    };
    if mesh.is_empty() {
        return Err(Error::InvalidMesh("cannot build a distance field for an empty mesh".into()));
    }
    if let Some(v) = mesh.vertices().iter().find(|v| !spec.contains(v)) {
        return Err(Error::OutOfBounds(format!("vertex {v:?} lies outside the grid")));
    }
    let n = spec.node_count();
    let mut distance = vec![f64::INFINITY; n];
    let mut closest = vec![Vec3::repeat(f64::NAN); n];
    let mut source = vec![u32::MAX; n];

    let h = spec.voxel_size();
    let band = NARROW_BAND_VOXELS * h;
    for t in 0..mesh.triangle_count() {
        let [a, b, c] = mesh.corners(t);
        let lo = a.inf(&b).inf(&c).add_scalar(-band);
        let hi = a.sup(&b).sup(&c).add_scalar(band);
        let r0 = node_range(&spec, &lo, &hi);
        for k in r0[2].0..=r0[2].1 {
            for j in r0[1].0..=r0[1].1 {
                for i in r0[0].0..=r0[0].1 {
                    let p = spec.node_position(i, j, k);
                    let q = closest_point_on_triangle(&p, &a, &b, &c);
                    let d = (p - q).norm();
                    let idx = spec.index(i, j, k);
                    if d < distance[idx] {
                        distance[idx] = d;
                        closest[idx] = q;
                        source[idx] = t as u32;
                    }
                }
            }
        }
    }
    let mut field = DistanceField { spec, distance, closest, source, sign: None, surface: Arc::new(Surface::new(mesh)) };
    field.sweep(mesh);
    Ok(field)
}

fn node_range(spec: &GridSpec, lo: &Vec3, hi: &Vec3) -> [(usize, usize); 3] {
    [0, 1, 2].map(|a| {
        let l = ((lo[a] - spec.origin[a]) * spec.resolution).ceil().max(0.0) as usize;
        let h = ((hi[a] - spec.origin[a]) * spec.resolution).floor();
        let h = if h < 0.0 { 0 } else { (h as usize).min(spec.dims[a] - 1) };
        (l.min(spec.dims[a] - 1), h)
    })
}

impl DistanceField {
    fn sweep(&mut self, mesh: &TriMesh) {
        let [nx, ny, nz] = self.spec.dims;
        for _ in 0..MAX_SWEEP_PASSES {
            let mut max_update: f64 = 0.0;
            for octant in 0..8 {
                let fx = octant & 1 != 0;
                let fy = octant & 2 != 0;
                let fz = octant & 4 != 0;
                for kk in 0..nz {
                    let k = if fz { nz - 1 - kk } else { kk };
                    for jj in 0..ny {
                        let j = if fy { ny - 1 - jj } else { jj };
                        for ii in 0..nx {
                            let i = if fx { nx - 1 - ii } else { ii };
                            let idx = self.spec.index(i, j, k);
                            let p = self.spec.node_position(i, j, k);
                            let mut best = self.distance[idx];
                            let mut best_cp = None;
                            // Upwind neighbours in this sweep direction,
                            // including the diagonal ones.
                            let ui = [Some(i), upwind(i, nx, fx)];
                            let uj = [Some(j), upwind(j, ny, fy)];
                            let uk = [Some(k), upwind(k, nz, fz)];
                            let mut up = [None; 7];
                            for (slot, m) in up.iter_mut().zip(1..8usize) {
                                if let (Some(a), Some(b), Some(c)) = (ui[m & 1], uj[(m >> 1) & 1], uk[(m >> 2) & 1]) {
                                    *slot = Some(self.spec.index(a, b, c));
                                }
                            }
                            for m in up.into_iter().flatten() {
                                let t = self.source[m];
                                if t == u32::MAX || t == self.source[idx] {
                                    continue;
                                }
                                let [a, b, c] = mesh.corners(t as usize);
                                let cp = closest_point_on_triangle(&p, &a, &b, &c);
                                let d = (p - cp).norm();
                                if d < best {
                                    best = d;
                                    best_cp = Some((cp, t));
                                }
                            }
                            if let Some((cp, t)) = best_cp {
                                let old = self.distance[idx];
                                let delta = if old.is_finite() { old - best } else { f64::INFINITY };
                                max_update = max_update.max(delta);
                                self.distance[idx] = best;
                                self.closest[idx] = cp;
                                self.source[idx] = t;
                            }
                        }
                    }
                }
            }
            if max_update < SWEEP_TOLERANCE {
                break;
            }
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn distance_at(&self, idx: usize) -> f64 {
        self.distance[idx]
    }

    pub fn closest_at(&self, idx: usize) -> Vec3 {
        self.closest[idx]
    }

    pub fn distances(&self) -> &[f64] {
        &self.distance
    }

    pub fn is_signed(&self) -> bool {
        self.sign.is_some()
    }

    /// Closest surface point and its distance. The eight nodes surrounding `p`
    /// nominate their source triangles plus those triangles' one-ring, and `p`
    /// is projected exactly onto each candidate. The result is never farther
    /// than the best stored closest point of those nodes.
    pub fn query_closest(&self, p: &Vec3) -> Result<(Vec3, f64)> {
        if !self.spec.contains(p) {
            return Err(Error::OutOfBounds(format!("query point {p:?} outside grid")));
        }
        let g = (p - self.spec.origin) * self.spec.resolution;
        let base = [0, 1, 2].map(|a| (g[a].floor() as usize).min(self.spec.dims[a] - 2));
        let mut candidates: Vec<u32> = Vec::with_capacity(64);
        for corner in 0..8 {
            let i = base[0] + (corner & 1);
            let j = base[1] + ((corner >> 1) & 1);
            let k = base[2] + ((corner >> 2) & 1);
            let t = self.source[self.spec.index(i, j, k)];
            if t == u32::MAX || candidates.contains(&t) {
                continue;
            }
            candidates.push(t);
        }
        let direct = candidates.len();
        for n in 0..direct {
            for &v in &self.surface.triangles[candidates[n] as usize] {
                for &t in &self.surface.vertex_triangles[v] {
                    if !candidates.contains(&t) {
                        candidates.push(t);
                    }
                }
            }
        }
        let mut best = (Vec3::repeat(f64::NAN), f64::INFINITY);
        for t in candidates {
            let cp = self.surface.project(t, p);
            let d = (p - cp).norm();
            if d < best.1 {
                best = (cp, d);
            }
        }
        if best.1.is_finite() {
            Ok(best)
        } else {
            Err(Error::OutOfBounds(format!("no surface information near {p:?}")))
        }
    }

    /// Best of the eight surrounding nodes' stored closest points, without
    /// re-projection.
    pub fn query_stored(&self, p: &Vec3) -> Result<(Vec3, f64)> {
        if !self.spec.contains(p) {
            return Err(Error::OutOfBounds(format!("query point {p:?} outside grid")));
        }
        let g = (p - self.spec.origin) * self.spec.resolution;
        let base = [0, 1, 2].map(|a| (g[a].floor() as usize).min(self.spec.dims[a] - 2));
        let mut best = (Vec3::repeat(f64::NAN), f64::INFINITY);
        for corner in 0..8 {
            let idx = self.spec.index(base[0] + (corner & 1), base[1] + ((corner >> 1) & 1), base[2] + ((corner >> 2) & 1));
            if !self.distance[idx].is_finite() {
                continue;
            }
            let d = (p - self.closest[idx]).norm();
            if d < best.1 {
                best = (self.closest[idx], d);
            }
        }
        if best.1.is_finite() {
            Ok(best)
        } else {
            Err(Error::OutOfBounds(format!("no surface information near {p:?}")))
        }
    }

    /// Distance query that clamps points outside the grid onto its boundary and
    /// adds the clamping offset. Useful for optimizers that may wander off.
    pub fn distance_clamped(&self, p: &Vec3) -> (Vec3, f64) {
        let hi = self.spec.max_corner();
        let q = p.sup(&self.spec.origin).inf(&hi);
        match self.query_closest(&q) {
            Ok((cp, _)) => (cp, (p - cp).norm()),
            Err(_) => (q, f64::INFINITY),
        }
    }

    /// Writes the dump format: 7 little-endian f64 (dims, resolution, origin),
    /// node distances as f32 (x fastest), then signs as i8.
    pub fn write_binary(&self, mut w: impl Write) -> std::io::Result<()> {
        let s = &self.spec;
        for v in [s.dims[0] as f64, s.dims[1] as f64, s.dims[2] as f64, s.resolution, s.origin.x, s.origin.y, s.origin.z] {
            w.write_all(&v.to_le_bytes())?;
        }
        for &d in &self.distance {
            w.write_all(&(d as f32).to_le_bytes())?;
        }
        match &self.sign {
            Some(sign) => w.write_all(&sign.iter().map(|&s| s as u8).collect::<Vec<_>>())?,
            None => w.write_all(&vec![1u8; self.distance.len()])?,
        }
        Ok(())
    }

    pub fn save_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_binary(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }
}

fn upwind(i: usize, n: usize, flipped: bool) -> Option<usize> {
    if flipped {
        (i + 1 < n).then_some(i + 1)
    } else {
        i.checked_sub(1)
    }
}

/// Contents of a field dump (closest points are not persisted).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub spec: GridSpec,
    pub distance: Vec<f32>,
    pub sign: Vec<i8>,
}

pub fn read_field_dump(mut r: impl Read) -> Result<FieldDump> {
    let bad = |m: &str| Error::Domain(format!("field dump: {m}"));
    let mut head = [0u8; 56];
    r.read_exact(&mut head).map_err(|_| bad("short header"))?;
    let f = |k: usize| f64::from_le_bytes(head[8 * k..8 * k + 8].try_into().expect("8 bytes"));
    let dims = [f(0) as usize, f(1) as usize, f(2) as usize];
    let spec = GridSpec::new(dims, f(3), Vec3::new(f(4), f(5), f(6)))?;
    let n = spec.node_count();
    let mut buf = vec![0u8; 4 * n];
    r.read_exact(&mut buf).map_err(|_| bad("short distance array"))?;
    let distance = buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    let mut sbuf = vec![0u8; n];
    r.read_exact(&mut sbuf).map_err(|_| bad("short sign array"))?;
    Ok(FieldDump { spec, distance, sign: sbuf.into_iter().map(|b| b as i8).collect() })
}

/// Signs the field: nodes reachable from the grid boundary without passing
/// through the surface band are outside (+1), surface-band nodes are 0 and the
/// rest are inside (−1). The surface band is every node within half a voxel
/// of the mesh, which is enough to block any 6-connected step that crosses it.
pub fn sign_field(mesh: &TriMesh, field: &DistanceField) -> Result<SignedDistanceField> {
    if !mesh.is_closed_manifold() {
        return Err(Error::NotWatertight("some edge is not shared by exactly two triangles".into()));
    }
    let spec = field.spec;
    let n = spec.node_count();
    let surface_band = 0.5 * spec.voxel_size();
    let mut sign = vec![-1i8; n];
    for (idx, s) in sign.iter_mut().enumerate() {
        if field.distance[idx] <= surface_band {
            *s = 0;
        }
    }
    let [nx, ny, nz] = spec.dims;
    let mut queue = VecDeque::new();
    for idx in 0..n {
        let [i, j, k] = spec.coords(idx);
        let on_boundary = i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1;
        if on_boundary && sign[idx] == -1 {
            sign[idx] = 1;
            queue.push_back(idx);
        }
    }
    while let Some(idx) = queue.pop_front() {
        let [i, j, k] = spec.coords(idx);
        let mut visit = |m: usize| {
            if sign[m] == -1 {
                sign[m] = 1;
                queue.push_back(m);
            }
        };
        if i > 0 {
            visit(spec.index(i - 1, j, k));
        }
        if i + 1 < nx {
            visit(spec.index(i + 1, j, k));
        }
        if j > 0 {
            visit(spec.index(i, j - 1, k));
        }
        if j + 1 < ny {
            visit(spec.index(i, j + 1, k));
        }
        if k > 0 {
            visit(spec.index(i, j, k - 1));
        }
        if k + 1 < nz {
            visit(spec.index(i, j, k + 1));
        }
    }
    let mut signed = field.clone();
    signed.sign = Some(sign);
    Ok(SignedDistanceField(signed))
}

/// Treats an open surface as an infinitely thin shell: nodes within half a
/// voxel are on the surface (0) and everything else is outside (+1).
pub fn shell_field(field: &DistanceField) -> SignedDistanceField {
    let band = 0.5 * field.spec.voxel_size();
    let sign = field.distance.iter().map(|&d| if d <= band { 0 } else { 1 }).collect();
    let mut shell = field.clone();
    shell.sign = Some(sign);
    SignedDistanceField(shell)
}

impl SignedDistanceField {
    pub fn field(&self) -> &DistanceField {
        &self.0
    }

    pub fn spec(&self) -> &GridSpec {
        &self.0.spec
    }

    pub fn sign_at(&self, idx: usize) -> i8 {
        self.0.sign.as_ref().expect("signed field")[idx]
    }

    /// Signed distance stored at a node (0 on the surface band).
    pub fn value_at(&self, idx: usize) -> f64 {
        self.sign_at(idx) as f64 * self.0.distance[idx]
    }

    /// Signed distance of the node nearest to `p`; `None` outside the grid.
    pub fn nearest_value(&self, p: &Vec3) -> Option<f64> {
        self.0.spec.nearest_node(p).map(|idx| self.value_at(idx))
    }

    pub fn query_closest(&self, p: &Vec3) -> Result<(Vec3, f64)> {
        self.0.query_closest(p)
    }
}

/// Convenience: fitted grid at `resolution`, distance field, then signs.
pub fn build_signed_field(mesh: &TriMesh, resolution: f64) -> Result<SignedDistanceField> {
    let spec = GridSpec::fit(mesh, resolution)?;
    let field = build_distance_field(mesh, Some(spec))?;
    sign_field(mesh, &field)
}
