//! Fold tasks over the built-in garments with analytically mirrored targets.

use super::{init_trajectory_with_height, mirror_fold, Arm, BezierCurve, FoldTask};
use crate::error::Result;
use crate::mesh::garments::{shirt_contour, towel_contour};
use crate::mesh::{mesh_from_contour, TriMesh, Vec2, Vec3};

/// Side of the square towel used for the half fold (m).
pub const SQUARE_TOWEL_SIDE: f64 = 0.3;

/// Square towel folded in half along its anti-diagonal: one gripper carries
/// corner `(0, 0)` onto corner `(s, s)`.
pub fn towel_half_fold(edge_len: f64) -> Result<FoldTask> {
    let s = SQUARE_TOWEL_SIDE;
    let mesh = mesh_from_contour(&towel_contour(s, s)?, edge_len)?;
    let grasp = mesh.anchors()["corner_bl"];
    let far = mesh.vertices()[mesh.anchors()["corner_tr"]];
    let normal = Vec3::new(-1.0, -1.0, 0.0);
    let target = mirror_fold(&mesh, Vec3::new(s, 0.0, 0.0), normal)?;
    let arm = Arm { vertex: grasp, target: Vec3::new(far.x, far.y, target.vertices()[grasp].z) };
    FoldTask::new(mesh, vec![arm], target)
}

/// Shirt hem folded up by `lift` with two grippers placed `separation`
/// apart around the hem center.
pub fn shirt_bottom_fold(edge_len: f64, separation: f64, lift: f64) -> Result<FoldTask> {
    let mesh = mesh_from_contour(&shirt_contour()?, edge_len)?;
    let line_y = lift / 2.0;
    let target = mirror_fold(&mesh, Vec3::new(0.0, line_y, 0.0), Vec3::new(0.0, -1.0, 0.0))?;
    let hem = |x: f64| nearest_boundary(&mesh, Vec2::new(x, 0.0));
    let arms = [-separation / 2.0, separation / 2.0]
        .iter()
        .map(|&x| {
            let v = hem(x);
            let t = target.vertices()[v];
            Arm { vertex: v, target: t }
        })
        .collect();
    FoldTask::new(mesh, arms, target)
}

fn nearest_boundary(mesh: &TriMesh, p: Vec2) -> usize {
    let (_, hi) = mesh.bounds();
    let mid = 0.5 * hi.z;
    mesh.vertices()
        .iter()
        .enumerate()
        .filter(|(_, v)| (v.z - mid).abs() < 1e-9)
        .min_by(|a, b| (a.1.xy() - p).norm_squared().total_cmp(&(b.1.xy() - p).norm_squared()))
        .map(|(i, _)| i)
        .expect("contour vertices")
}

/// The same endpoints as the initial arc but barely lifted off the table.
pub fn low_flat_curves(task: &FoldTask) -> Result<Vec<BezierCurve>> {
    (0..task.arms.len()).map(|k| init_trajectory_with_height(task.start(k), task.arms[k].target, 0.02)).collect()
}
