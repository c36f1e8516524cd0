//! Thin-shell cloth simulator.
//!
//! Internal energy is the registration deformation energy with physical
//! stiffnesses: `k_stretch E_area + k_shear E_angle + k_bend E_hinge`, plus
//! gravity. Each step minimizes the implicit-Euler incremental potential
//!
//! ```text
//! G(x) = (1 + c h)/(2h²) ‖x − x̂‖²_M + U(x),   x̂ = xₙ + h vₙ/(1 + c h)
//! ```
//!
//! (`c` is mass-proportional damping) with a few Gauss-Newton iterations:
//! every elastic term is a sum of squared residuals, so the system matrix is
//! assembled from residual gradients and solved with block-Jacobi CG. Pins are hard position constraints. The table is
//! the plane `z = 0`; a tilt rotates gravity instead of the plane. Contact
//! projects penetrating vertices onto the plane, removes their normal
//! velocity and applies a Coulomb-clamped tangential impulse.

mod calibrate;
mod scenarios;

pub use calibrate::{calibrate_friction, calibrate_shear, measure_shear_frac, onset_angle, slides, FrictionCalibration, ShearCalibration};
pub use scenarios::{hang_pose, simulate_fold, simulate_hang, simulate_hang_report, FoldReport, HangReport, PinTrajectory, SettleSettings};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec3};
use nalgebra::Matrix3;

use crate::registration::energy::{self, angle_energy, area_energy, hinge_energy, RestShape};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClothParams {
    /// Edge springs and the area-change energy (N/m).
    pub stretch_stiffness: f64,
    /// Scales the angle (shear) energy (N/m).
    pub shear_stiffness: f64,
    /// Scales the hinge energy (J).
    pub bend_stiffness: f64,
    /// Mass per unit mesh area (kg/m²).
    pub density: f64,
    /// Mass-proportional damping rate (1/s).
    pub damping: f64,
    /// Table friction coefficient.
    pub friction: f64,
    pub timestep: f64,
    pub gravity: f64,
    pub newton_iterations: usize,
    pub cg_iterations: usize,
}

impl Default for ClothParams {
    fn default() -> Self {
        Self {
            stretch_stiffness: 20.0,
            shear_stiffness: 20.0,
            bend_stiffness: 1e-4,
            density: 0.1,
            damping: 3.0,
            friction: 0.4,
            timestep: 0.01,
            gravity: 9.81,
            newton_iterations: 8,
            cg_iterations: 30,
        }
    }
}

impl ClothParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.stretch_stiffness, self.shear_stiffness, self.bend_stiffness, self.density, self.damping, self.friction, self.timestep, self.gravity];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("cloth params must be finite".into()));
        }
        if self.stretch_stiffness < 0.0 || self.shear_stiffness < 0.0 || self.bend_stiffness < 0.0 {
            return Err(Error::Domain("stiffnesses must be non-negative".into()));
        }
        if !(self.density > 0.0) {
            return Err(Error::Domain("density must be positive".into()));
        }
        if !(self.timestep > 0.0 && self.timestep <= 0.02) {
            return Err(Error::Domain(format!("timestep {} outside (0, 0.02]", self.timestep)));
        }
        if self.damping < 0.0 || self.friction < 0.0 || self.newton_iterations == 0 {
            return Err(Error::Domain("damping and friction must be non-negative, newton_iterations positive".into()));
        }
        Ok(())
    }

    /// Scales stretch and shear stiffness together.
    pub fn with_membrane(&self, stretch: f64) -> Self {
        let ratio = if self.stretch_stiffness > 0.0 { self.shear_stiffness / self.stretch_stiffness } else { 1.0 };
        Self { stretch_stiffness: stretch, shear_stiffness: stretch * ratio, ..*self }
    }
}

/// Supporting plane `z = 0`. `tilt` (radians) rotates gravity about the y
/// axis so that `+x` is downhill.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Table {
    pub friction: f64,
    pub tilt: f64,
}

/// Mesh-derived constants of a simulation.
#[derive(Debug, Clone)]
pub struct Cloth {
    pub rest: RestShape,
    /// Unique mesh edges and their rest lengths.
    pub edges: Vec<[usize; 2]>,
    pub edge_lengths: Vec<f64>,
    pub mass: Vec<f64>,
    pub params: ClothParams,
}

impl Cloth {
    pub fn new(mesh: &TriMesh, params: ClothParams) -> Result<Self> {
        params.validate()?;
        let rest = RestShape::new(mesh)?;
        let mut mass = vec![0.0; mesh.vertex_count()];
        for (t, tri) in mesh.triangles().iter().enumerate() {
            for &v in tri {
                mass[v] += params.density * rest.areas[t] / 3.0;
            }
        }
        if mass.iter().any(|&m| m <= 0.0) {
            return Err(Error::InvalidMesh("every vertex must belong to a triangle".into()));
        }
        let mut edges: Vec<[usize; 2]> = mesh.edge_faces().into_keys().map(|(a, b)| [a.min(b), a.max(b)]).collect();
        edges.sort_unstable();
        edges.dedup();
        let x = mesh.vertices();
        let edge_lengths = edges.iter().map(|e| (x[e[1]] - x[e[0]]).norm()).collect();
        Ok(Self { rest, edges, edge_lengths, mass, params })
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Elastic energy and, when requested, its gradient.
    pub fn elastic_energy(&self, x: &[Vec3], mut grad: Option<&mut [Vec3]>) -> f64 {
        let p = &self.params;
        let mut e = 0.0;
        for (edge, &l0) in self.edges.iter().zip(&self.edge_lengths) {
            let d = x[edge[1]] - x[edge[0]];
            let l = d.norm();
            e += 0.5 * p.stretch_stiffness * (l - l0) * (l - l0);
            if let Some(g) = grad.as_deref_mut() {
                if l > 0.0 {
                    let f = d * (p.stretch_stiffness * (l - l0) / l);
                    g[edge[1]] += f;
                    g[edge[0]] -= f;
                }
            }
        }
        match grad {
            Some(g) => {
                e + p.stretch_stiffness * area_energy(&self.rest, x, p.stretch_stiffness, Some(&mut *g))
                    + p.shear_stiffness * angle_energy(&self.rest, x, p.shear_stiffness, Some(&mut *g))
                    + p.bend_stiffness * hinge_energy(&self.rest, x, p.bend_stiffness, Some(g))
            }
            None => {
                e + p.stretch_stiffness * area_energy(&self.rest, x, 1.0, None)
                    + p.shear_stiffness * angle_energy(&self.rest, x, 1.0, None)
                    + p.bend_stiffness * hinge_energy(&self.rest, x, 1.0, None)
            }
        }
    }

    fn potential(&self, x: &[Vec3], g: &Vec3, grad: Option<&mut [Vec3]>) -> f64 {
        let mut u = 0.0;
        if let Some(gr) = grad {
            u += self.elastic_energy(x, Some(gr));
            for (i, m) in self.mass.iter().enumerate() {
                gr[i] -= *m * g;
            }
        } else {
            u += self.elastic_energy(x, None);
        }
        u - self.mass.iter().zip(x).map(|(m, p)| m * g.dot(p)).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    /// Pinned vertices and the positions they must reach at the end of the
    /// next step.
    pub pins: BTreeMap<usize, Vec3>,
    pub table: Option<Table>,
    pub time: f64,
}

impl SimState {
    pub fn at_rest(mesh: &TriMesh) -> Self {
        Self {
            positions: mesh.vertices().to_vec(),
            velocities: vec![Vec3::zeros(); mesh.vertex_count()],
            pins: BTreeMap::new(),
            table: None,
            time: 0.0,
        }
    }

    pub fn max_speed(&self) -> f64 {
        self.velocities.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn center_of_mass(&self, cloth: &Cloth) -> Vec3 {
        let m = cloth.total_mass();
        self.positions.iter().zip(&cloth.mass).map(|(p, w)| p * *w).sum::<Vec3>() / m
    }
}

pub fn gravity_vector(params: &ClothParams, table: Option<&Table>) -> Vec3 {
    let tilt = table.map_or(0.0, |t| t.tilt);
    params.gravity * Vec3::new(tilt.sin(), 0.0, -tilt.cos())
}

/// Kinetic plus gravitational plus elastic energy. Gravity is measured from
/// the table plane along the (possibly tilted) gravity direction.
pub fn mechanical_energy(state: &SimState, cloth: &Cloth) -> f64 {
    let g = gravity_vector(&cloth.params, state.table.as_ref());
    let kinetic: f64 = state.velocities.iter().zip(&cloth.mass).map(|(v, m)| 0.5 * m * v.norm_squared()).sum();
    kinetic + cloth.potential(&state.positions, &g, None)
}

struct StepProblem<'a> {
    cloth: &'a Cloth,
    x_hat: Vec<Vec3>,
    inertia: f64,
    g: Vec3,
    free: Vec<bool>,
}

impl StepProblem<'_> {
    fn value(&self, x: &[Vec3]) -> f64 {
        let kin: f64 = x.iter().zip(&self.x_hat).zip(&self.cloth.mass).map(|((p, q), m)| m * (p - q).norm_squared()).sum();
        0.5 * self.inertia * kin + self.cloth.potential(x, &self.g, None)
    }

    fn gradient(&self, x: &[Vec3], out: &mut [Vec3]) {
        out.iter_mut().for_each(|v| *v = Vec3::zeros());
        self.cloth.potential(x, &self.g, Some(out));
        for i in 0..x.len() {
            if self.free[i] {
                out[i] += self.inertia * self.cloth.mass[i] * (x[i] - self.x_hat[i]);
            } else {
                out[i] = Vec3::zeros();
            }
        }
    }
}

fn dot(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

/// Gradient of one scalar residual `ρ` of the elastic energy `Σ ρ²` with
/// respect to up to four vertices.
#[derive(Clone, Copy)]
struct Residual {
    verts: [usize; 4],
    len: usize,
    grad: [Vec3; 4],
}

fn linearize(cloth: &Cloth, x: &[Vec3], out: &mut Vec<Residual>) {
    out.clear();
    let p = &cloth.params;
    let rest = &cloth.rest;
    let z = Vec3::zeros();
    if p.stretch_stiffness > 0.0 {
        let s = (0.5 * p.stretch_stiffness).sqrt();
        for e in &cloth.edges {
            let d = x[e[1]] - x[e[0]];
            let l = d.norm();
            let u = if l > 0.0 { d * (s / l) } else { z };
            out.push(Residual { verts: [e[0], e[1], 0, 0], len: 2, grad: [-u, u, z, z] });
        }
    }
    for (t, tri) in rest.triangles.iter().enumerate() {
        let ab = rest.areas[t];
        let (a, b, c) = (x[tri[0]], x[tri[1]], x[tri[2]]);
        if p.stretch_stiffness > 0.0 {
            let n = (b - a).cross(&(c - a));
            let nn = n.norm();
            let s = (0.5 * p.stretch_stiffness * ab).sqrt();
            let grad = if nn > 0.0 {
                let nh = n / nn;
                [0.5 * nh.cross(&(c - b)) * (s / ab), 0.5 * nh.cross(&(a - c)) * (s / ab), 0.5 * nh.cross(&(b - a)) * (s / ab), z]
            } else {
                [z; 4]
            };
            out.push(Residual { verts: [tri[0], tri[1], tri[2], 0], len: 3, grad });
        }
        if p.shear_stiffness > 0.0 {
            let s = (p.shear_stiffness * ab / 6.0).sqrt();
            for k in 0..3 {
                let (i0, i1, i2) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let tb = rest.angles[t][k];
                let g = energy::corner_angle_grad(&x[i0], &x[i1], &x[i2]);
                let f = s / tb;
                out.push(Residual { verts: [i0, i1, i2, 0], len: 3, grad: [g[0] * f, g[1] * f, g[2] * f, z] });
            }
        }
    }
    if p.bend_stiffness > 0.0 {
        for (k, h) in rest.hinges.iter().enumerate() {
            let s = (p.bend_stiffness * rest.hinge_weights[k]).sqrt();
            let g = energy::dihedral_angle_grad(&x[h.a], &x[h.b], &x[h.left], &x[h.right]);
            out.push(Residual {
                verts: [h.a, h.b, h.left, h.right],
                len: 4,
                grad: [g[0] * s, g[1] * s, g[2] * s, g[3] * s],
            });
        }
    }
}

/// Gauss-Newton system `(I M + 2 Jᵀ J) d = −g` solved by block-Jacobi
/// preconditioned CG, restricted to the coordinates where `mask` is one.
fn gauss_newton_direction(prob: &StepProblem, res: &[Residual], g: &[Vec3], mask: &[Vec3], iters: usize) -> Vec<Vec3> {
    let n = g.len();
    let project = |v: &mut [Vec3]| v.iter_mut().zip(mask).for_each(|(a, m)| *a = a.component_mul(m));
    let mut blocks: Vec<Matrix3<f64>> = prob.cloth.mass.iter().map(|m| Matrix3::identity() * (prob.inertia * m)).collect();
    for r in res {
        for k in 0..r.len {
            blocks[r.verts[k]] += 2.0 * r.grad[k] * r.grad[k].transpose();
        }
    }
    let precond: Vec<Matrix3<f64>> = blocks
        .iter()
        .zip(mask)
        .map(|(b, m)| {
            // Locked coordinates are dropped from the block before inverting.
            let mut b = *b;
            for c in 0..3 {
                if m[c] == 0.0 {
                    b.row_mut(c).fill(0.0);
                    b.column_mut(c).fill(0.0);
                    b[(c, c)] = 1.0;
                }
            }
            let d = Matrix3::from_diagonal(m);
            d * b.try_inverse().unwrap_or_else(Matrix3::zeros) * d
        })
        .collect();
    let apply = |p: &[Vec3], out: &mut [Vec3]| {
        for (i, o) in out.iter_mut().enumerate() {
            *o = p[i] * (prob.inertia * prob.cloth.mass[i]);
        }
        for r in res {
            let jp: f64 = (0..r.len).map(|k| r.grad[k].dot(&p[r.verts[k]])).sum();
            for k in 0..r.len {
                out[r.verts[k]] += 2.0 * jp * r.grad[k];
            }
        }
        project(out);
    };
    let mut d = vec![Vec3::zeros(); n];
    let mut r: Vec<Vec3> = g.iter().zip(mask).map(|(v, m)| -v.component_mul(m)).collect();
    let mut z: Vec<Vec3> = r.iter().zip(&precond).map(|(v, m)| m * v).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let rz0 = rz;
    let mut hp = vec![Vec3::zeros(); n];
    for _ in 0..iters {
        if rz <= 1e-14 * rz0 || rz <= 0.0 {
            break;
        }
        apply(&p, &mut hp);
        let php = dot(&p, &hp);
        if php <= 0.0 {
            break;
        }
        let a = rz / php;
        for i in 0..n {
            d[i] += a * p[i];
            r[i] -= a * hp[i];
        }
        for i in 0..n {
            z[i] = precond[i] * r[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    d
}

/// Free coordinates: pinned vertices are locked entirely, and vertices lying
/// on the table that are pushed into it lose their vertical coordinate.
fn free_mask(prob: &StepProblem, x: &[Vec3], g: &[Vec3], table: bool) -> Vec<Vec3> {
    x.iter()
        .zip(g)
        .zip(&prob.free)
        .map(|((p, gi), &free)| {
            if !free {
                Vec3::zeros()
            } else if table && p.z <= 0.0 && gi.z > 0.0 {
                Vec3::new(1.0, 1.0, 0.0)
            } else {
                Vec3::new(1.0, 1.0, 1.0)
            }
        })
        .collect()
}

/// Advances the state by `dt`.
pub fn step(state: &mut SimState, cloth: &Cloth, dt: f64) -> Result<()> {
    let p = &cloth.params;
    if !(dt > 0.0 && dt <= p.timestep + 1e-15) {
        return Err(Error::Domain(format!("dt {dt} must lie in (0, {}]", p.timestep)));
    }
    let n = state.positions.len();
    if n != cloth.mass.len() {
        return Err(Error::Domain("state and cloth differ in vertex count".into()));
    }
    let h = dt;
    let damp = 1.0 + p.damping * h;
    let on_table = state.table.is_some();
    let x_hat: Vec<Vec3> = state.positions.iter().zip(&state.velocities).map(|(x, v)| x + v * (h / damp)).collect();
    let mut free = vec![true; n];
    let mut x = x_hat.clone();
    if on_table {
        x.iter_mut().for_each(|q| q.z = q.z.max(0.0));
    }
    for (&i, target) in &state.pins {
        if i >= n {
            return Err(Error::Domain(format!("pinned vertex {i} out of range")));
        }
        free[i] = false;
        x[i] = *target;
    }
    let prob = StepProblem { cloth, x_hat, inertia: damp / (h * h), g: gravity_vector(p, state.table.as_ref()), free };
    let mut g = vec![Vec3::zeros(); n];
    let mut res = Vec::new();
    for _ in 0..p.newton_iterations {
        prob.gradient(&x, &mut g);
        let mask = free_mask(&prob, &x, &g, on_table);
        let gmax = g.iter().zip(&mask).zip(&cloth.mass).map(|((v, m), w)| v.component_mul(m).norm() / w).fold(0.0, f64::max);
        if gmax * h * h < 1e-10 {
            break;
        }
        linearize(cloth, &x, &mut res);
        let d = gauss_newton_direction(&prob, &res, &g, &mask, p.cg_iterations);
        let slope = dot(&g, &d);
        if slope >= 0.0 {
            break;
        }
        let f0 = prob.value(&x);
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let mut trial: Vec<Vec3> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            if on_table {
                trial.iter_mut().for_each(|q| q.z = q.z.max(0.0));
            }
            if prob.value(&trial) <= f0 + 1e-4 * alpha * slope {
                x = trial;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        let dmax = d.iter().map(|v| v.norm()).fold(0.0, f64::max) * alpha;
        if !moved || dmax < 1e-6 * h {
            break;
        }
    }
    let mut v: Vec<Vec3> = x.iter().zip(&state.positions).map(|(a, b)| (a - b) / h).collect();
    if let Some(table) = state.table {
        prob.gradient(&x, &mut g);
        for i in 0..n {
            if !prob.free[i] || x[i].z > 0.0 {
                continue;
            }
            // Support force from the locked coordinate; Coulomb-limited
            // tangential impulse.
            let normal = g[i].z.max(0.0);
            let limit = table.friction * normal * h / (cloth.mass[i] * damp);
            let vt = Vec3::new(v[i].x, v[i].y, 0.0);
            let speed = vt.norm();
            let vt = if speed > limit { vt * ((speed - limit) / speed) } else { Vec3::zeros() };
            v[i] = vt;
            x[i] = Vec3::new(state.positions[i].x + h * vt.x, state.positions[i].y + h * vt.y, 0.0);
        }
    }
    if x.iter().chain(&v).any(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(Error::SimDiverged(format!("non-finite state at t = {:.3}", state.time + h)));
    }
    state.positions = x;
    state.velocities = v;
    state.time += h;
    Ok(())
}
