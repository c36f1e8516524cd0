//! Discrete-shells deformation energies relative to a rest shape, with
//! analytic gradients. Shared by non-rigid registration and the cloth
//! simulator.

use crate::error::{Error, Result};
use crate::mesh::{Hinge, TriMesh, Vec3, DEGENERATE_AREA};

const MIN_REST_ANGLE: f64 = 1e-9;

/// Per-triangle and per-hinge quantities of the undeformed mesh.
#[derive(Debug, Clone)]
pub struct RestShape {
    pub triangles: Vec<[usize; 3]>,
    pub areas: Vec<f64>,
    pub angles: Vec<[f64; 3]>,
    pub hinges: Vec<Hinge>,
    pub hinge_angles: Vec<f64>,
    /// `‖ē‖ / h̄ₑ` with `h̄ₑ` a third of the two incident heights' sum.
    pub hinge_weights: Vec<f64>,
}

impl RestShape {
    pub fn new(rest: &TriMesh) -> Result<Self> {
        let x = rest.vertices();
        let triangles = rest.triangles().to_vec();
        let mut areas = Vec::with_capacity(triangles.len());
        let mut angles = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let a = rest.triangle_area(t);
            if !(a > DEGENERATE_AREA) {
                return Err(Error::DegenerateRestShape(format!("triangle {t} has rest area {a:e}")));
            }
            let th = triangle_angles(&x[tri[0]], &x[tri[1]], &x[tri[2]]);
            if th.iter().any(|&v| !(v > MIN_REST_ANGLE)) {
                return Err(Error::DegenerateRestShape(format!("triangle {t} has a zero rest angle")));
            }
            areas.push(a);
            angles.push(th);
        }
        let hinges = rest.hinges();
        let mut hinge_angles = Vec::with_capacity(hinges.len());
        let mut hinge_weights = Vec::with_capacity(hinges.len());
        for h in &hinges {
            let e = (x[h.b] - x[h.a]).norm();
            let heights = 2.0 * (areas[h.faces[0]] + areas[h.faces[1]]) / e;
            let h_bar = heights / 3.0;
            if !(h_bar > 0.0) || !(e > 0.0) {
                return Err(Error::DegenerateRestShape(format!("hinge {}-{} has zero height", h.a, h.b)));
            }
            hinge_angles.push(dihedral_angle(&x[h.a], &x[h.b], &x[h.left], &x[h.right]));
            hinge_weights.push(e / h_bar);
        }
        Ok(Self { triangles, areas, angles, hinges, hinge_angles, hinge_weights })
    }

    pub fn vertex_count_hint(&self) -> usize {
        self.triangles.iter().flatten().max().map_or(0, |m| m + 1)
    }
}

/// Interior angles at the three corners.
pub fn triangle_angles(a: &Vec3, b: &Vec3, c: &Vec3) -> [f64; 3] {
    [corner_angle(a, b, c), corner_angle(b, c, a), corner_angle(c, a, b)]
}

/// Angle at `a` between `b − a` and `c − a`.
pub fn corner_angle(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let u = b - a;
    let v = c - a;
    u.cross(&v).norm().atan2(u.dot(&v))
}

/// Gradients of the angle at `a` with respect to `a`, `b`, `c`.
pub fn corner_angle_grad(a: &Vec3, b: &Vec3, c: &Vec3) -> [Vec3; 3] {
    let u = b - a;
    let v = c - a;
    let n = u.cross(&v);
    let nn = n.norm();
    if nn == 0.0 {
        return [Vec3::zeros(); 3];
    }
    let n = n / nn;
    let gb = -n.cross(&u) / u.norm_squared();
    let gc = n.cross(&v) / v.norm_squared();
    [-(gb + gc), gb, gc]
}

/// Signed dihedral angle of the hinge `a → b` with `left` opposite in the
/// face wound `(a, b, left)` and `right` in the face wound `(b, a, right)`.
/// Zero when flat.
pub fn dihedral_angle(a: &Vec3, b: &Vec3, left: &Vec3, right: &Vec3) -> f64 {
    let e = b - a;
    let n0 = e.cross(&(left - a));
    let n1 = (a - b).cross(&(right - b));
    let en = e.norm();
    if en == 0.0 {
        return 0.0;
    }
    n0.cross(&n1).dot(&(e / en)).atan2(n0.dot(&n1))
}

/// Gradients of [`dihedral_angle`] with respect to `a`, `b`, `left`, `right`.
pub fn dihedral_angle_grad(a: &Vec3, b: &Vec3, left: &Vec3, right: &Vec3) -> [Vec3; 4] {
    let e = b - a;
    let e2 = e.norm_squared();
    let n0 = e.cross(&(left - a));
    let n1 = (a - b).cross(&(right - b));
    let (s0, s1) = (n0.norm_squared(), n1.norm_squared());
    if e2 == 0.0 || s0 == 0.0 || s1 == 0.0 {
        return [Vec3::zeros(); 4];
    }
    let en = e2.sqrt();
    let gl = -en * n0 / s0;
    let gr = -en * n1 / s1;
    let al = (left - a).dot(&e) / e2;
    let ar = (right - a).dot(&e) / e2;
    let ga = -(1.0 - al) * gl - (1.0 - ar) * gr;
    let gb = -al * gl - ar * gr;
    [ga, gb, gl, gr]
}

/// Difference of two angles wrapped into `(−π, π]`.
pub fn wrap_angle(d: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut w = d.rem_euclid(tau);
    if w > std::f64::consts::PI {
        w -= tau;
    }
    w
}

fn area_and_grad(a: &Vec3, b: &Vec3, c: &Vec3) -> (f64, [Vec3; 3]) {
    let n = (b - a).cross(&(c - a));
    let nn = n.norm();
    if nn == 0.0 {
        return (0.0, [Vec3::zeros(); 3]);
    }
    let nh = n / nn;
    (0.5 * nn, [0.5 * nh.cross(&(c - b)), 0.5 * nh.cross(&(a - c)), 0.5 * nh.cross(&(b - a))])
}

/// `Σ ½(A/Ā − 1)² Ā`, accumulating `scale · ∇E` into `grad` when given.
pub fn area_energy(rest: &RestShape, x: &[Vec3], scale: f64, mut grad: Option<&mut [Vec3]>) -> f64 {
    let mut e = 0.0;
    for (t, tri) in rest.triangles.iter().enumerate() {
        let ab = rest.areas[t];
        let (a, g) = area_and_grad(&x[tri[0]], &x[tri[1]], &x[tri[2]]);
        let r = a / ab - 1.0;
        e += 0.5 * r * r * ab;
        if let Some(grad) = grad.as_deref_mut() {
            for k in 0..3 {
                grad[tri[k]] += scale * r * g[k];
            }
        }
    }
    e
}

/// `Σᵢ Σₖ (1/6)(θ/θ̄ − 1)² Āᵢ`, accumulating `scale · ∇E` into `grad`.
pub fn angle_energy(rest: &RestShape, x: &[Vec3], scale: f64, mut grad: Option<&mut [Vec3]>) -> f64 {
    let mut e = 0.0;
    for (t, tri) in rest.triangles.iter().enumerate() {
        let ab = rest.areas[t];
        for k in 0..3 {
            let (i0, i1, i2) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let th = corner_angle(&x[i0], &x[i1], &x[i2]);
            let tb = rest.angles[t][k];
            let r = th / tb - 1.0;
            e += r * r * ab / 6.0;
            if let Some(grad) = grad.as_deref_mut() {
                let g = corner_angle_grad(&x[i0], &x[i1], &x[i2]);
                let de = scale * r * ab / (3.0 * tb);
                grad[i0] += de * g[0];
                grad[i1] += de * g[1];
                grad[i2] += de * g[2];
            }
        }
    }
    e
}

/// `Σₑ (θₑ − θ̄ₑ)² ‖ē‖/h̄ₑ`, accumulating `scale · ∇E` into `grad`.
pub fn hinge_energy(rest: &RestShape, x: &[Vec3], scale: f64, mut grad: Option<&mut [Vec3]>) -> f64 {
    let mut e = 0.0;
    for (k, h) in rest.hinges.iter().enumerate() {
        let th = dihedral_angle(&x[h.a], &x[h.b], &x[h.left], &x[h.right]);
        let d = wrap_angle(th - rest.hinge_angles[k]);
        let w = rest.hinge_weights[k];
        e += d * d * w;
        if let Some(grad) = grad.as_deref_mut() {
            let g = dihedral_angle_grad(&x[h.a], &x[h.b], &x[h.left], &x[h.right]);
            let de = scale * 2.0 * d * w;
            grad[h.a] += de * g[0];
            grad[h.b] += de * g[1];
            grad[h.left] += de * g[2];
            grad[h.right] += de * g[3];
        }
    }
    e
}
