use std::collections::BTreeMap;

use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};

use super::{mechanical_energy, step, Cloth, ClothParams, SimState, Table};
use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec3};
use crate::trajectory::{smoothstep, BezierCurve};

/// Quasi-static detection: every vertex slower than `speed_tol` for
/// `hold_time` seconds, giving up after `max_time`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SettleSettings {
    pub speed_tol: f64,
    pub hold_time: f64,
    pub max_time: f64,
}

impl Default for SettleSettings {
    fn default() -> Self {
        Self { speed_tol: 1e-3, hold_time: 0.2, max_time: 30.0 }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct HangReport {
    pub pin_vertex: usize,
    pub steps: usize,
    pub sim_time: f64,
    pub converged: bool,
    pub lowest_vertex: usize,
    /// Pin-to-lowest-point distance.
    pub hang_length: f64,
    /// Mechanical energy sampled every 10 steps.
    pub energies: Vec<f64>,
}

/// Rigidly places a (flat) mesh in a vertical plane, hanging from `pin` with
/// the farthest vertex straight below, plus a tiny seeded out-of-plane jitter.
pub fn hang_pose(mesh: &TriMesh, pin: usize, seed: u64) -> Result<TriMesh> {
    if pin >= mesh.vertex_count() {
        return Err(Error::Domain(format!("pin vertex {pin} out of range")));
    }
    let x = mesh.vertices();
    let p0 = x[pin];
    let c = x.iter().sum::<Vec3>() / x.len() as f64;
    let mut cov = Matrix3::zeros();
    for v in x {
        let d = v - c;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    let normal: Vec3 = eig.eigenvectors.column(k).into_owned().normalize();
    let far = x.iter().max_by(|a, b| (*a - p0).norm_squared().total_cmp(&(*b - p0).norm_squared())).expect("non-empty");
    let mut down = far - p0;
    down -= normal * normal.dot(&down);
    if down.norm() == 0.0 {
        return Err(Error::DegenerateMesh("cannot find a hanging direction".into()));
    }
    let down = down.normalize();
    let side = normal.cross(&down);
    let reach = x.iter().map(|v| (v - p0).norm()).fold(0.0, f64::max);
    let top = Vec3::new(0.0, 0.0, 1.2 * reach + 0.1);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x6a09_e667);
    let mut out = Vec::with_capacity(x.len());
    for (i, v) in x.iter().enumerate() {
        let d = v - p0;
        let jitter = if i == pin { 0.0 } else { rng.random_range(-1e-4..1e-4) };
        out.push(top + Vec3::new(d.dot(&side), d.dot(&normal) + jitter, -d.dot(&down)));
    }
    Ok(mesh.with_positions(out))
}

/// Hangs `mesh` from `pin_vertex` under gravity until quasi-static.
pub fn simulate_hang(mesh: &TriMesh, pin_vertex: usize, params: &ClothParams) -> Result<TriMesh> {
    simulate_hang_report(mesh, pin_vertex, params, &SettleSettings::default()).map(|(m, _)| m)
}

pub fn simulate_hang_report(mesh: &TriMesh, pin_vertex: usize, params: &ClothParams, settle: &SettleSettings) -> Result<(TriMesh, HangReport)> {
    let posed = hang_pose(mesh, pin_vertex, pin_vertex as u64)?;
    let cloth = Cloth::new(mesh, *params)?;
    let mut state = SimState::at_rest(&posed);
    let pin_pos = posed.vertices()[pin_vertex];
    state.pins.insert(pin_vertex, pin_pos);
    let h = params.timestep;
    let hold_steps = (settle.hold_time / h).ceil() as usize;
    let max_steps = (settle.max_time / h).ceil() as usize;
    let mut calm = 0;
    let mut energies = Vec::new();
    let mut steps = 0;
    let mut converged = false;
    while steps < max_steps {
        step(&mut state, &cloth, h)?;
        steps += 1;
        if steps % 10 == 0 {
            energies.push(mechanical_energy(&state, &cloth));
        }
        if state.max_speed() < settle.speed_tol {
            calm += 1;
            if calm >= hold_steps {
                converged = true;
                break;
            }
        } else {
            calm = 0;
        }
    }
    if !converged {
        return Err(Error::SimDiverged(format!(
            "hang from vertex {pin_vertex} not quasi-static after {:.1} s (max speed {:.2e} m/s)",
            state.time,
            state.max_speed()
        )));
    }
    let (lowest, low) = state.positions.iter().enumerate().min_by(|a, b| a.1.z.total_cmp(&b.1.z)).expect("non-empty");
    let report = HangReport {
        pin_vertex,
        steps,
        sim_time: state.time,
        converged,
        lowest_vertex: lowest,
        hang_length: (low - pin_pos).norm(),
        energies,
    };
    Ok((posed.with_positions(state.positions), report))
}

/// One gripper: `vertex` follows `curve` at parameter `smoothstep(t / duration)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PinTrajectory {
    pub vertex: usize,
    pub curve: BezierCurve,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FoldReport {
    pub steps: usize,
    pub sim_time: f64,
    pub settled: bool,
    /// Gripper positions sampled every 10 steps, per trajectory.
    pub pin_paths: Vec<Vec<[f64; 3]>>,
    pub energies: Vec<f64>,
}

/// Moves the pinned vertices along their curves over a table, releases them,
/// and lets the garment settle. Vertex indexing is preserved.
pub fn simulate_fold(mesh: &TriMesh, trajectories: &[PinTrajectory], params: &ClothParams, settle: &SettleSettings) -> Result<(TriMesh, FoldReport)> {
    let mut seen = std::collections::BTreeSet::new();
    for t in trajectories {
        if t.vertex >= mesh.vertex_count() {
            return Err(Error::Domain(format!("grasp vertex {} out of range", t.vertex)));
        }
        if !seen.insert(t.vertex) {
            return Err(Error::Domain(format!("vertex {} grasped twice", t.vertex)));
        }
        if !(t.duration > 0.0) {
            return Err(Error::Domain("trajectory duration must be positive".into()));
        }
    }
    let cloth = Cloth::new(mesh, *params)?;
    let mut state = SimState::at_rest(mesh);
    state.table = Some(Table { friction: params.friction, tilt: 0.0 });
    let h = params.timestep;
    let moving = trajectories.iter().map(|t| t.duration).fold(0.0, f64::max);
    let move_steps = (moving / h).ceil() as usize;
    let mut pin_paths = vec![Vec::new(); trajectories.len()];
    let mut energies = Vec::new();
    let mut steps = 0;
    for _ in 0..move_steps {
        let t_next = state.time + h;
        state.pins = trajectories.iter().map(|tr| (tr.vertex, tr.curve.at(smoothstep(t_next / tr.duration)))).collect::<BTreeMap<_, _>>();
        step(&mut state, &cloth, h)?;
        steps += 1;
        if steps % 10 == 0 {
            for (path, tr) in pin_paths.iter_mut().zip(trajectories) {
                let p = state.positions[tr.vertex];
                path.push([p.x, p.y, p.z]);
            }
            energies.push(mechanical_energy(&state, &cloth));
        }
    }
    state.pins.clear();
    let hold_steps = (settle.hold_time / h).ceil() as usize;
    let max_steps = (settle.max_time / h).ceil() as usize;
    let mut calm = 0;
    let mut settled = false;
    for _ in 0..max_steps {
        step(&mut state, &cloth, h)?;
        steps += 1;
        if steps % 10 == 0 {
            energies.push(mechanical_energy(&state, &cloth));
        }
        if state.max_speed() < settle.speed_tol {
            calm += 1;
            if calm >= hold_steps {
                settled = true;
                break;
            }
        } else {
            calm = 0;
        }
    }
    let report = FoldReport { steps, sim_time: state.time, settled, pin_paths, energies };
    Ok((mesh.with_positions(state.positions), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::garments::{towel_contour, DESK_EDGE_LENGTH};
    use crate::mesh::mesh_from_contour;

    fn towel() -> TriMesh {
        mesh_from_contour(&towel_contour(0.4, 0.3).unwrap(), DESK_EDGE_LENGTH).unwrap()
    }

    #[test]
    fn free_fall_matches_ballistics() {
        let m = crate::mesh::grid_sheet(0.1, 0.1, 3, 3, 2.0);
        let params = ClothParams { damping: 0.0, timestep: 0.002, ..Default::default() };
        let cloth = Cloth::new(&m, params).unwrap();
        let mut s = SimState::at_rest(&m);
        let z0 = s.center_of_mass(&cloth).z;
        for _ in 0..250 {
            step(&mut s, &cloth, 0.002).unwrap();
        }
        let drop = z0 - s.center_of_mass(&cloth).z;
        let expected = 0.5 * 9.81 * 0.25;
        assert!((drop - expected).abs() < 0.01 * expected, "{drop} vs {expected}");
    }

    #[test]
    fn towel_hangs_by_its_diagonal() {
        let m = towel();
        let pin = m.anchors()["corner_bl"];
        let (_, r) = simulate_hang_report(&m, pin, &ClothParams::default(), &SettleSettings::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.lowest_vertex, m.anchors()["corner_tr"]);
        assert!((0.45..=0.55).contains(&r.hang_length), "{}", r.hang_length);
        for w in r.energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-6 * w[0].abs());
        }
    }

    #[test]
    fn stiff_towel_hangs_at_rest_diagonal() {
        let m = towel();
        let pin = m.anchors()["corner_tl"];
        let p = ClothParams::default().with_membrane(5000.0);
        let (_, r) = simulate_hang_report(&m, pin, &p, &SettleSettings::default()).unwrap();
        assert!((r.hang_length - 0.5).abs() < 0.005, "{}", r.hang_length);
    }

    #[test]
    fn hang_is_deterministic() {
        let m = towel();
        let a = simulate_hang(&m, 3, &ClothParams::default()).unwrap();
        let b = simulate_hang(&m, 3, &ClothParams::default()).unwrap();
        assert_eq!(a.vertices(), b.vertices());
        assert_eq!(a.triangles(), m.triangles());
    }

    #[test]
    fn null_fold_leaves_towel_in_place() {
        let m = towel();
        let v = m.anchors()["corner_br"];
        let traj = PinTrajectory { vertex: v, curve: BezierCurve::constant(m.vertices()[v]), duration: 0.5 };
        let (out, report) = simulate_fold(&m, &[traj], &ClothParams::default(), &SettleSettings::default()).unwrap();
        assert!(report.settled);
        let rms = (out.vertices().iter().zip(m.vertices()).map(|(a, b)| (a - b).norm_squared()).sum::<f64>() / m.vertex_count() as f64).sqrt();
        assert!(rms < 1e-3, "{rms}");
    }

    #[test]
    fn fold_rejects_repeated_grasp() {
        let m = towel();
        let t = PinTrajectory { vertex: 0, curve: BezierCurve::constant(m.vertices()[0]), duration: 1.0 };
        assert!(matches!(simulate_fold(&m, &[t, t], &ClothParams::default(), &SettleSettings::default()), Err(Error::Domain(_))));
    }
}
