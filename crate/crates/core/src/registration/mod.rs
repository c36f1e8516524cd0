//! Two-stage mesh registration: uniform scaling to the target's
//! representative size, distance-field ICP, then non-rigid refinement of
//! `E_fit + κ E_area + β E_angle + α E_hinge` by Levenberg–Marquardt.

pub mod energy;

use nalgebra::{Matrix3, SVD};

use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec3};
use crate::sdf::DistanceField;
pub use energy::RestShape;
use energy::{angle_energy, area_energy, corner_angle, dihedral_angle, hinge_energy, wrap_angle};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vec3::zeros() }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform { rotation: self.rotation * other.rotation, translation: self.rotation * other.translation + self.translation }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    pub fn transform_mesh(&self, mesh: &TriMesh) -> TriMesh {
        mesh.map_positions(|p| self.apply(p))
    }
}

/// Scales `source` about its area-weighted center by `l_T / l_S`.
pub fn scale_to_target(source: &TriMesh, target: &TriMesh) -> Result<(TriMesh, f64)> {
    let ls = source.representative_size()?;
    let lt = target.representative_size()?;
    if !(ls > 0.0) {
        return Err(Error::DegenerateMesh("source has zero representative size".into()));
    }
    let factor = lt / ls;
    let c = source.area_weighted_center()?;
    Ok((source.scaled_about(&c, factor), factor))
}

/// Least-squares rotation and translation taking `src[i]` to `dst[i]`.
pub fn kabsch(src: &[Vec3], dst: &[Vec3]) -> RigidTransform {
    let n = src.len().max(1) as f64;
    let cs = src.iter().sum::<Vec3>() / n;
    let cd = dst.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = SVD::new(h, true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let mut d = Matrix3::identity();
    if (vt.transpose() * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = vt.transpose() * d * u.transpose();
    RigidTransform { rotation, translation: cd - rotation * cs }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IcpSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Pairs farther than this multiple of the median distance are dropped.
    pub rejection_factor: f64,
}

impl Default for IcpSettings {
    fn default() -> Self {
        Self { max_iterations: 100, tolerance: 1e-6, rejection_factor: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform,
    /// RMS vertex-to-closest-point distance at the final pose, over the
    /// pairs that survive outlier rejection.
    pub residual: f64,
    pub iterations: usize,
}

/// RMS closest-point distance over the pairs within `factor` × median.
fn trimmed_rms(points: &[Vec3], field: &DistanceField, factor: f64) -> f64 {
    let mut d: Vec<f64> = points.iter().map(|p| field.distance_clamped(p).1).collect();
    d.sort_by(f64::total_cmp);
    let cutoff = factor * d[d.len() / 2];
    let kept: Vec<f64> = d.into_iter().filter(|x| *x <= cutoff || cutoff == 0.0).collect();
    (kept.iter().map(|x| x * x).sum::<f64>() / kept.len().max(1) as f64).sqrt()
}

pub fn icp_rigid(source: &TriMesh, target_field: &DistanceField) -> Result<IcpResult> {
    icp_rigid_with(source, target_field, &IcpSettings::default())
}

pub fn icp_rigid_with(source: &TriMesh, target_field: &DistanceField, settings: &IcpSettings) -> Result<IcpResult> {
    if source.vertex_count() == 0 {
        return Err(Error::InvalidMesh("ICP source has no vertices".into()));
    }
    let mut total = RigidTransform::identity();
    let mut pts: Vec<Vec3> = source.vertices().to_vec();
    let mut residual = trimmed_rms(&pts, target_field, settings.rejection_factor);
    let mut increases = 0;
    let mut iterations = 0;
    for it in 0..settings.max_iterations {
        iterations = it + 1;
        let pairs: Vec<(Vec3, Vec3, f64)> = pts
            .iter()
            .map(|p| {
                let (cp, d) = target_field.distance_clamped(p);
                (*p, cp, d)
            })
            .filter(|(_, _, d)| d.is_finite())
            .collect();
        if pairs.len() < 3 {
            return Err(Error::IcpDiverged { iterations, residual });
        }
        let mut ds: Vec<f64> = pairs.iter().map(|x| x.2).collect();
        ds.sort_by(f64::total_cmp);
        let cutoff = settings.rejection_factor * ds[ds.len() / 2];
        let kept: Vec<&(Vec3, Vec3, f64)> = pairs.iter().filter(|x| x.2 <= cutoff || cutoff == 0.0).collect();
        let src: Vec<Vec3> = kept.iter().map(|x| x.0).collect();
        let dst: Vec<Vec3> = kept.iter().map(|x| x.1).collect();
        let step = kabsch(&src, &dst);
        for p in &mut pts {
            *p = step.apply(p);
        }
        total = step.compose(&total);
        let new_residual = trimmed_rms(&pts, target_field, settings.rejection_factor);
        if !new_residual.is_finite() {
            return Err(Error::IcpDiverged { iterations, residual: new_residual });
        }
        if new_residual > residual {
            increases += 1;
            if increases >= 5 {
                return Err(Error::IcpDiverged { iterations, residual: new_residual });
            }
        } else {
            increases = 0;
        }
        residual = new_residual;
        let change = (step.rotation - Matrix3::identity()).norm() + step.translation.norm();
        if change < settings.tolerance {
            break;
        }
    }
    Ok(IcpResult { transform: total, residual, iterations })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmSettings {
    pub max_iter: usize,
    /// Stop when an accepted step lowers the energy by less than this fraction.
    pub tol: f64,
    /// Finite-difference step for the Jacobian (m).
    pub fd_step: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self { max_iter: 50, tol: 1e-6, fd_step: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeformationParams {
    pub kappa: f64,
    pub beta: f64,
    pub alpha: f64,
    pub lm: LmSettings,
}

impl Default for DeformationParams {
    fn default() -> Self {
        Self { kappa: 1.0, beta: 1.0, alpha: 0.1, lm: LmSettings::default() }
    }
}

impl DeformationParams {
    pub fn validate(&self) -> Result<()> {
        if [self.kappa, self.beta, self.alpha].iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Domain("deformation weights must be finite and non-negative".into()));
        }
        if !(self.lm.fd_step > 0.0) || !(self.lm.tol >= 0.0) {
            return Err(Error::Domain("LM settings need fd_step > 0 and tol >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct EnergyBreakdown {
    pub e_fit: f64,
    pub e_area: f64,
    pub e_angle: f64,
    pub e_hinge: f64,
    pub total: f64,
}

/// `Σ dist(gᵢ)² Āᵢ` over triangle barycenters, with its gradient (closest
/// points held fixed) accumulated into `grad` when given.
pub fn fit_energy(rest: &RestShape, x: &[Vec3], field: &DistanceField, mut grad: Option<&mut [Vec3]>) -> f64 {
    let mut e = 0.0;
    for (t, tri) in rest.triangles.iter().enumerate() {
        let g = (x[tri[0]] + x[tri[1]] + x[tri[2]]) / 3.0;
        let (cp, d) = field.distance_clamped(&g);
        e += d * d * rest.areas[t];
        if let Some(grad) = grad.as_deref_mut() {
            let gv = (2.0 / 3.0) * rest.areas[t] * (g - cp);
            for &v in tri {
                grad[v] += gv;
            }
        }
    }
    e
}

fn breakdown(rest: &RestShape, x: &[Vec3], field: &DistanceField, p: &DeformationParams) -> EnergyBreakdown {
    let e_fit = fit_energy(rest, x, field, None);
    let e_area = area_energy(rest, x, 1.0, None);
    let e_angle = angle_energy(rest, x, 1.0, None);
    let e_hinge = hinge_energy(rest, x, 1.0, None);
    EnergyBreakdown { e_fit, e_area, e_angle, e_hinge, total: e_fit + p.kappa * e_area + p.beta * e_angle + p.alpha * e_hinge }
}

pub fn deformation_energy(s: &TriMesh, s_bar: &TriMesh, t_field: &DistanceField, p: &DeformationParams) -> Result<EnergyBreakdown> {
    if !s.has_same_connectivity(s_bar) {
        return Err(Error::Domain("S and S̄ differ in connectivity".into()));
    }
    p.validate()?;
    let rest = RestShape::new(s_bar)?;
    Ok(breakdown(&rest, s.vertices(), t_field, p))
}

/// Gradient of the total energy with respect to vertex positions.
pub fn deformation_gradient(s: &TriMesh, s_bar: &TriMesh, t_field: &DistanceField, p: &DeformationParams) -> Result<Vec<Vec3>> {
    if !s.has_same_connectivity(s_bar) {
        return Err(Error::Domain("S and S̄ differ in connectivity".into()));
    }
    let rest = RestShape::new(s_bar)?;
    let x = s.vertices();
    let mut g = vec![Vec3::zeros(); x.len()];
    fit_energy(&rest, x, t_field, Some(&mut g));
    area_energy(&rest, x, p.kappa, Some(&mut g));
    angle_energy(&rest, x, p.beta, Some(&mut g));
    hinge_energy(&rest, x, p.alpha, Some(&mut g));
    Ok(g)
}

/// Residual blocks whose squared norms sum to the total energy.
enum Block {
    Fit(usize),
    Area(usize),
    Angle(usize),
    Hinge(usize),
}

struct Residuals<'a> {
    rest: &'a RestShape,
    field: &'a DistanceField,
    params: DeformationParams,
    blocks: Vec<Block>,
}

impl<'a> Residuals<'a> {
    fn new(rest: &'a RestShape, field: &'a DistanceField, params: DeformationParams) -> Self {
        let mut blocks = Vec::new();
        for t in 0..rest.triangles.len() {
            blocks.push(Block::Fit(t));
            if params.kappa > 0.0 {
                blocks.push(Block::Area(t));
            }
            if params.beta > 0.0 {
                blocks.push(Block::Angle(t));
            }
        }
        if params.alpha > 0.0 {
            blocks.extend((0..rest.hinges.len()).map(Block::Hinge));
        }
        Self { rest, field, params, blocks }
    }

    fn vertices(&self, b: &Block) -> Vec<usize> {
        match *b {
            Block::Fit(t) | Block::Area(t) | Block::Angle(t) => self.rest.triangles[t].to_vec(),
            Block::Hinge(k) => {
                let h = &self.rest.hinges[k];
                vec![h.a, h.b, h.left, h.right]
            }
        }
    }

    fn eval(&self, b: &Block, x: &[Vec3], out: &mut Vec<f64>) {
        out.clear();
        let r = &self.rest;
        match *b {
            Block::Fit(t) => {
                let tri = r.triangles[t];
                let g = (x[tri[0]] + x[tri[1]] + x[tri[2]]) / 3.0;
                let (cp, _) = self.field.distance_clamped(&g);
                let s = r.areas[t].sqrt();
                out.extend((g - cp).iter().map(|v| s * v));
            }
            Block::Area(t) => {
                let tri = r.triangles[t];
                let a = 0.5 * (x[tri[1]] - x[tri[0]]).cross(&(x[tri[2]] - x[tri[0]])).norm();
                out.push((0.5 * self.params.kappa * r.areas[t]).sqrt() * (a / r.areas[t] - 1.0));
            }
            Block::Angle(t) => {
                let tri = r.triangles[t];
                let s = (self.params.beta * r.areas[t] / 6.0).sqrt();
                for k in 0..3 {
                    let th = corner_angle(&x[tri[k]], &x[tri[(k + 1) % 3]], &x[tri[(k + 2) % 3]]);
                    out.push(s * (th / r.angles[t][k] - 1.0));
                }
            }
            Block::Hinge(k) => {
                let h = &r.hinges[k];
                let th = dihedral_angle(&x[h.a], &x[h.b], &x[h.left], &x[h.right]);
                out.push((self.params.alpha * r.hinge_weights[k]).sqrt() * wrap_angle(th - r.hinge_angles[k]));
            }
        }
    }

    fn energy(&self, x: &[Vec3]) -> f64 {
        let mut buf = Vec::with_capacity(3);
        let mut e = 0.0;
        for b in &self.blocks {
            self.eval(b, x, &mut buf);
            e += buf.iter().map(|v| v * v).sum::<f64>();
        }
        e
    }

    /// Residual vector and its central-difference Jacobian in CSR form.
    fn linearize(&self, x: &[Vec3], h: f64) -> (Vec<f64>, Csr) {
        let mut r = Vec::new();
        let mut jac = Csr::new(3 * x.len());
        let mut buf = Vec::with_capacity(3);
        let mut plus = Vec::with_capacity(3);
        let mut minus = Vec::with_capacity(3);
        let mut xp = x.to_vec();
        for b in &self.blocks {
            self.eval(b, x, &mut buf);
            let verts = self.vertices(b);
            let rows = buf.len();
            let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows];
            for &v in &verts {
                for a in 0..3 {
                    let orig = xp[v][a];
                    xp[v][a] = orig + h;
                    self.eval(b, &xp, &mut plus);
                    xp[v][a] = orig - h;
                    self.eval(b, &xp, &mut minus);
                    xp[v][a] = orig;
                    for row in 0..rows {
                        let d = (plus[row] - minus[row]) / (2.0 * h);
                        if d != 0.0 {
                            cols[row].push((3 * v + a, d));
                        }
                    }
                }
            }
            r.extend_from_slice(&buf);
            for c in cols {
                jac.push_row(c);
            }
        }
        (r, jac)
    }
}

struct Csr {
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn new(ncols: usize) -> Self {
        Self { ncols, row_ptr: vec![0], cols: Vec::new(), vals: Vec::new() }
    }

    fn push_row(&mut self, entries: Vec<(usize, f64)>) {
        for (c, v) in entries {
            self.cols.push(c);
            self.vals.push(v);
        }
        self.row_ptr.push(self.cols.len());
    }

    fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.rows()) {
            *o = (self.row_ptr[r]..self.row_ptr[r + 1]).map(|k| self.vals[k] * x[self.cols[k]]).sum();
        }
    }

    fn mul_t(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, &yr) in y.iter().enumerate().take(self.rows()) {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[self.cols[k]] += self.vals[k] * yr;
            }
        }
    }

    fn normal_diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.ncols];
        for k in 0..self.vals.len() {
            d[self.cols[k]] += self.vals[k] * self.vals[k];
        }
        d
    }
}

/// Solves `(JᵀJ + λI) δ = b` by conjugate gradients.
fn solve_damped(j: &Csr, lambda: f64, b: &[f64], max_iter: usize) -> Vec<f64> {
    let n = b.len();
    let mut tmp = vec![0.0; j.rows()];
    let apply = |v: &[f64], out: &mut [f64], tmp: &mut [f64]| {
        j.mul(v, tmp);
        j.mul_t(tmp, out);
        for (o, vi) in out.iter_mut().zip(v) {
            *o += lambda * vi;
        }
    };
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let stop = rr * 1e-20;
    for _ in 0..max_iter {
        if rr <= stop || rr == 0.0 {
            break;
        }
        apply(&p, &mut ap, &mut tmp);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            break;
        }
        let a = rr / pap;
        for i in 0..n {
            x[i] += a * p[i];
            r[i] -= a * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LmIteration {
    pub iteration: usize,
    pub energy: f64,
    pub lambda: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct NonRigidResult {
    pub mesh: TriMesh,
    pub energy: EnergyBreakdown,
    pub initial: EnergyBreakdown,
    pub accepted_steps: usize,
    pub log: Vec<LmIteration>,
}

/// Deforms `s_bar` toward the target field, starting from and regularized
/// against `s_bar` itself.
pub fn nonrigid_register(s_bar: &TriMesh, t_field: &DistanceField, p: &DeformationParams) -> Result<NonRigidResult> {
    p.validate()?;
    let rest = RestShape::new(s_bar)?;
    let res = Residuals::new(&rest, t_field, *p);
    let mut x: Vec<Vec3> = s_bar.vertices().to_vec();
    let initial = breakdown(&rest, &x, t_field, p);
    if !initial.total.is_finite() {
        return Err(Error::NumericalFailure("initial energy is not finite".into()));
    }
    let mut energy = res.energy(&x);
    let mut log = Vec::new();
    let mut accepted = 0;
    if energy == 0.0 {
        return Ok(NonRigidResult { mesh: s_bar.clone(), energy: initial, initial, accepted_steps: 0, log });
    }
    let (mut r, mut jac) = res.linearize(&x, p.lm.fd_step);
    let mut lambda = 1e-3 * jac.normal_diagonal().into_iter().fold(0.0, f64::max).max(1e-12);
    let n = 3 * x.len();
    let mut grad = vec![0.0; n];
    let mut rejects = 0;
    let mut iteration = 0;
    while accepted < p.lm.max_iter && rejects < 40 {
        iteration += 1;
        jac.mul_t(&r, &mut grad);
        let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
        let delta = solve_damped(&jac, lambda, &rhs, 400);
        let trial: Vec<Vec3> = x.iter().enumerate().map(|(i, v)| v + Vec3::new(delta[3 * i], delta[3 * i + 1], delta[3 * i + 2])).collect();
        let e_new = res.energy(&trial);
        if !e_new.is_finite() {
            return Err(Error::NumericalFailure(format!("non-finite energy at LM iteration {iteration}")));
        }
        if e_new < energy {
            let rel = (energy - e_new) / energy;
            x = trial;
            energy = e_new;
            accepted += 1;
            rejects = 0;
            lambda /= 3.0;
            log.push(LmIteration { iteration, energy, lambda, accepted: true });
            if rel < p.lm.tol {
                break;
            }
            (r, jac) = res.linearize(&x, p.lm.fd_step);
        } else {
            lambda *= 2.0;
            rejects += 1;
            log.push(LmIteration { iteration, energy, lambda, accepted: false });
        }
    }
    let final_energy = breakdown(&rest, &x, t_field, p);
    Ok(NonRigidResult { mesh: s_bar.with_positions(x), energy: final_energy, initial, accepted_steps: accepted, log })
}

/// Area-weighted mean distance from triangle barycenters of `a` to the
/// surface behind `b_field`.
pub fn mesh_to_mesh_error(a: &TriMesh, b_field: &DistanceField) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::InvalidMesh("mesh_to_mesh_error on an empty mesh".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 0..a.triangle_count() {
        let area = a.triangle_area(t);
        num += area * b_field.distance_clamped(&a.barycenter(t)).1;
        den += area;
    }
    Ok(num / den)
}

#[derive(Debug, Clone)]
pub struct Registration {
    pub scale: f64,
    pub rigid: TriMesh,
    pub icp: IcpResult,
    pub nonrigid: NonRigidResult,
    pub error_rigid: f64,
    pub error_nonrigid: f64,
}

/// Scale, center-align, ICP, then non-rigid refinement of `source` onto the
/// surface behind `target_field`.
pub fn register(source: &TriMesh, target: &TriMesh, target_field: &DistanceField, p: &DeformationParams) -> Result<Registration> {
    let (scaled, scale) = scale_to_target(source, target)?;
    let shift = target.area_weighted_center()? - scaled.area_weighted_center()?;
    let centered = scaled.translated(&shift);
    let icp = icp_rigid(&centered, target_field)?;
    let rigid = icp.transform.transform_mesh(&centered);
    let nonrigid = nonrigid_register(&rigid, target_field, p)?;
    let error_rigid = mesh_to_mesh_error(&rigid, target_field)?;
    let error_nonrigid = mesh_to_mesh_error(&nonrigid.mesh, target_field)?;
    Ok(Registration { scale, rigid, icp, nonrigid, error_rigid, error_nonrigid })
}
