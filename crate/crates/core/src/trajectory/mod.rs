//! Fold trajectories: cubic Bézier gripper paths, shape dissimilarity, and a
//! secant Levenberg-Marquardt optimizer driven by the cloth simulator.

pub mod bezier;
pub mod fixtures;
mod optimize;

pub use bezier::{arc_length, bezier_eval, smoothstep, BezierCurve};
pub use optimize::{optimize_trajectory, LmLogEntry, TrajectoryLmSettings, TrajectoryResult};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clothsim::{simulate_fold, ClothParams, PinTrajectory, SettleSettings};
use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec3};

/// Height factor of the initial arc.
pub const INIT_HEIGHT: f64 = 1.0 / 3.0;

/// Area-weighted mean distance between corresponding triangle barycenters,
/// normalized by the target's total area (m).
pub fn dissimilarity(target: &TriMesh, shape: &TriMesh) -> Result<f64> {
    if !target.has_same_connectivity(shape) {
        return Err(Error::Domain("dissimilarity needs meshes with the same connectivity".into()));
    }
    let mut num = 0.0;
    let mut area = 0.0;
    for t in 0..target.triangle_count() {
        let a = target.triangle_area(t);
        num += (shape.barycenter(t) - target.barycenter(t)).norm() * a;
        area += a;
    }
    if !(area > 0.0) {
        return Err(Error::Domain("target has zero area".into()));
    }
    Ok(num / area)
}

/// Arc through the thirds of `p0 → p3`, lifted by `h ‖p0 − p3‖` along `+z`.
pub fn init_trajectory_with_height(p0: Vec3, p3: Vec3, h: f64) -> Result<BezierCurve> {
    let len = (p3 - p0).norm();
    if !(len > 0.0) {
        return Err(Error::DegenerateTask("trajectory start and end coincide".into()));
    }
    let lift = Vec3::z() * (h * len);
    BezierCurve::new([p0, (2.0 * p0 + p3) / 3.0 + lift, (p0 + 2.0 * p3) / 3.0 + lift, p3])
}

pub fn init_trajectory(p0: Vec3, p3: Vec3) -> Result<BezierCurve> {
    init_trajectory_with_height(p0, p3, INIT_HEIGHT)
}

/// One gripper: grasps `vertex` at its current position and ends at `target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub vertex: usize,
    pub target: Vec3,
}

/// Simulation settings used for every cost evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FoldSimSettings {
    pub params: ClothParams,
    /// Time for the grippers to traverse their curves (s).
    pub duration: f64,
    pub settle: SettleSettings,
}

impl Default for FoldSimSettings {
    fn default() -> Self {
        Self {
            params: ClothParams { timestep: 0.01, bend_stiffness: 2e-6, ..ClothParams::default() },
            duration: 2.0,
            settle: SettleSettings { speed_tol: 5e-3, hold_time: 0.1, max_time: 2.0 },
        }
    }
}

#[derive(Debug, Clone)]
pub struct FoldTask {
    pub mesh: TriMesh,
    pub arms: Vec<Arm>,
    /// Desired folded shape, same connectivity as `mesh`.
    pub target: TriMesh,
    /// Weight of the dissimilarity term.
    pub alpha: f64,
    /// Finite-difference step on the control points (m).
    pub delta: f64,
    pub lm: TrajectoryLmSettings,
    pub sim: FoldSimSettings,
}

impl FoldTask {
    pub fn new(mesh: TriMesh, arms: Vec<Arm>, target: TriMesh) -> Result<Self> {
        let task = Self { mesh, arms, target, alpha: 1e3, delta: 0.1, lm: TrajectoryLmSettings::default(), sim: FoldSimSettings::default() };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mesh.has_same_connectivity(&self.target) {
            return Err(Error::Domain("target shape must share the garment's connectivity".into()));
        }
        if self.arms.is_empty() {
            return Err(Error::DegenerateTask("no arms".into()));
        }
        if !(self.alpha > 0.0) || !(self.delta > 0.0) {
            return Err(Error::Domain("alpha and delta must be positive".into()));
        }
        for (k, a) in self.arms.iter().enumerate() {
            if a.vertex >= self.mesh.vertex_count() {
                return Err(Error::Domain(format!("arm {k} grasps vertex {} out of range", a.vertex)));
            }
            if self.arms[..k].iter().any(|b| b.vertex == a.vertex) {
                return Err(Error::Domain(format!("vertex {} grasped by two arms", a.vertex)));
            }
            if (self.mesh.vertices()[a.vertex] - a.target).norm() == 0.0 {
                return Err(Error::DegenerateTask(format!("arm {k} starts at its target")));
            }
        }
        Ok(())
    }

    pub fn start(&self, arm: usize) -> Vec3 {
        self.mesh.vertices()[self.arms[arm].vertex]
    }

    /// Number of optimization variables (`P₁`, `P₂` per arm).
    pub fn dimension(&self) -> usize {
        6 * self.arms.len()
    }

    pub fn initial_x(&self) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(self.dimension());
        for (k, a) in self.arms.iter().enumerate() {
            let c = init_trajectory(self.start(k), a.target)?;
            x.extend(c.points[1].iter());
            x.extend(c.points[2].iter());
        }
        Ok(x)
    }

    pub fn curves(&self, x: &[f64]) -> Result<Vec<BezierCurve>> {
        if x.len() != self.dimension() {
            return Err(Error::Domain(format!("expected {} variables, got {}", self.dimension(), x.len())));
        }
        self.arms
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let v = &x[6 * k..6 * k + 6];
                BezierCurve::new([self.start(k), Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]), a.target])
            })
            .collect()
    }

    pub fn pin_trajectories(&self, curves: &[BezierCurve]) -> Vec<PinTrajectory> {
        self.arms.iter().zip(curves).map(|(a, c)| PinTrajectory { vertex: a.vertex, curve: *c, duration: self.sim.duration }).collect()
    }

    /// Simulates the fold and returns the final shape.
    pub fn simulate(&self, curves: &[BezierCurve]) -> Result<TriMesh> {
        simulate_fold(&self.mesh, &self.pin_trajectories(curves), &self.sim.params, &self.sim.settle).map(|(m, _)| m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEvaluation {
    /// `l + α D̃`, or `+∞` when the simulation diverged.
    pub cost: f64,
    pub length: f64,
    pub dissimilarity: f64,
    pub feasible: bool,
}

/// `C(x) = Σ arc lengths + α D̃(S_t, S_x)` for the curves encoded by `x`.
pub fn trajectory_cost(task: &FoldTask, x: &[f64]) -> Result<CostEvaluation> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("control points must be finite".into()));
    }
    let curves = task.curves(x)?;
    let length: f64 = curves.iter().map(|c| arc_length(c, 1e-6)).sum();
    match task.simulate(&curves) {
        Ok(shape) => {
            let d = dissimilarity(&task.target, &shape)?;
            Ok(CostEvaluation { cost: length + task.alpha * d, length, dissimilarity: d, feasible: true })
        }
        Err(Error::SimDiverged(_)) => Ok(CostEvaluation { cost: f64::INFINITY, length, dissimilarity: f64::NAN, feasible: false }),
        Err(e) => Err(e),
    }
}

/// Costs of several candidates, evaluated in parallel; order is preserved.
pub fn trajectory_costs(task: &FoldTask, xs: &[Vec<f64>]) -> Result<Vec<CostEvaluation>> {
    xs.par_iter().map(|x| trajectory_cost(task, x)).collect()
}

/// Mean distance between two curves at matching parameters.
pub fn mean_separation(a: &BezierCurve, b: &BezierCurve, samples: usize) -> f64 {
    let n = samples.max(1);
    (0..=n).map(|i| (a.at(i as f64 / n as f64) - b.at(i as f64 / n as f64)).norm()).sum::<f64>() / (n + 1) as f64
}

/// Reflects `mesh` across the vertical plane through `line_point` with
/// in-plane normal `normal`: vertices on the positive side are mirrored to
/// the negative side and stacked on top (`z' = 2 z_top − z`).
pub fn mirror_fold(mesh: &TriMesh, line_point: Vec3, normal: Vec3) -> Result<TriMesh> {
    let n = Vec3::new(normal.x, normal.y, 0.0);
    if !(n.norm() > 0.0) {
        return Err(Error::Domain("fold line normal must have a horizontal component".into()));
    }
    let n = n.normalize();
    let (_, hi) = mesh.bounds();
    let z_top = hi.z;
    let out = mesh
        .vertices()
        .iter()
        .map(|p| {
            let s = (p - line_point).dot(&n);
            if s > 0.0 {
                let q = p - 2.0 * s * n;
                Vec3::new(q.x, q.y, 2.0 * z_top - p.z)
            } else {
                *p
            }
        })
        .collect();
    Ok(mesh.with_positions(out))
}
