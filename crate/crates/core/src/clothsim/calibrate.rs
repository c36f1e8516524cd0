use super::{simulate_hang_report, step, Cloth, ClothParams, HangReport, SettleSettings, SimState, Table};
use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec3};

const STIFFNESS_RANGE: (f64, f64) = (1e-3, 1e7);
const SLIDE_DISTANCE: f64 = 5e-3;
const SLIDE_WINDOW: f64 = 2.0;

/// `(L₁ − L₂)/L₂`: hang length against the flat distance between the pin and
/// the vertex that ends up lowest.
pub fn measure_shear_frac(mesh: &TriMesh, pin: usize, params: &ClothParams) -> Result<(f64, HangReport)> {
    let (_, report) = simulate_hang_report(mesh, pin, params, &SettleSettings::default())?;
    let flat = (mesh.vertices()[report.lowest_vertex] - mesh.vertices()[pin]).norm();
    if !(flat > 0.0) {
        return Err(Error::DegenerateMesh("pin is the lowest vertex".into()));
    }
    Ok(((report.hang_length - flat) / flat, report))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ShearCalibration {
    pub stretch_stiffness: f64,
    pub shear_stiffness: f64,
    pub achieved: f64,
    pub target: f64,
    /// `(stiffness, shear_frac)` for every simulated candidate.
    pub evaluations: Vec<(f64, f64)>,
}

/// Finds the membrane stiffness (stretch, with shear scaled alongside) whose
/// hang reproduces `target` shear fraction within 10% relative.
pub fn calibrate_shear(mesh: &TriMesh, pin: usize, target: f64, params: &ClothParams) -> Result<ShearCalibration> {
    if !(0.001..=0.2).contains(&target) {
        return Err(Error::Domain(format!("target shear fraction {target} outside [0.001, 0.2]")));
    }
    let mut evals = Vec::new();
    let mut eval = |k: f64| -> Result<f64> {
        let (s, _) = measure_shear_frac(mesh, pin, &params.with_membrane(k))?;
        evals.push((k, s));
        Ok(s)
    };
    // Secant steps in log-log space, safeguarded by a bracket once one exists.
    let mut k = params.stretch_stiffness.max(STIFFNESS_RANGE.0);
    let mut soft: Option<(f64, f64)> = None;
    let mut stiff: Option<(f64, f64)> = None;
    let mut best: Option<(f64, f64)> = None;
    for _ in 0..30 {
        let s = eval(k)?;
        if best.is_none_or(|(_, bs)| (s - target).abs() < (bs - target).abs()) {
            best = Some((k, s));
        }
        if ((s - target) / target).abs() < 0.03 {
            break;
        }
        if s > target {
            soft = Some((k, s));
        } else {
            stiff = Some((k, s));
        }
        k = match (soft, stiff) {
            (Some((ka, sa)), Some((kb, sb))) if sa > 0.0 && sb > 0.0 => {
                let slope = (sb.ln() - sa.ln()) / (kb.ln() - ka.ln());
                let guess = if slope < 0.0 { (ka.ln() + (target.ln() - sa.ln()) / slope).exp() } else { (ka * kb).sqrt() };
                let (lo, hi) = (ka.min(kb), ka.max(kb));
                let margin = (hi / lo).powf(0.05);
                guess.clamp(lo * margin, hi / margin)
            }
            (Some((ka, _)), Some((kb, _))) => (ka * kb).sqrt(),
            _ if s > 0.0 => (k * s / target).clamp(k / 16.0, k * 16.0),
            _ => k / 4.0,
        };
        if !(STIFFNESS_RANGE.0..=STIFFNESS_RANGE.1).contains(&k) {
            return Err(Error::CalibrationFailed(format!("shear target {target} needs stiffness outside {STIFFNESS_RANGE:?}")));
        }
    }
    let (k, s) = best.expect("at least one evaluation");
    if ((s - target) / target).abs() > 0.1 {
        return Err(Error::CalibrationFailed(format!("best shear fraction {s:.4} misses target {target:.4}")));
    }
    let p = params.with_membrane(k);
    Ok(ShearCalibration { stretch_stiffness: p.stretch_stiffness, shear_stiffness: p.shear_stiffness, achieved: s, target, evaluations: evals })
}

/// Lays the mesh flat on a table tilted by `angle_deg` and reports whether
/// its center of mass travels more than 5 mm along the table within 2 s.
pub fn slides(mesh: &TriMesh, params: &ClothParams, angle_deg: f64) -> Result<bool> {
    let cloth = Cloth::new(mesh, *params)?;
    let (lo, _) = mesh.bounds();
    let placed = mesh.translated(&Vec3::new(0.0, 0.0, -lo.z));
    let mut state = SimState::at_rest(&placed);
    state.table = Some(Table { friction: params.friction, tilt: angle_deg.to_radians() });
    let c0 = state.center_of_mass(&cloth);
    let steps = (SLIDE_WINDOW / params.timestep).ceil() as usize;
    for _ in 0..steps {
        step(&mut state, &cloth, params.timestep)?;
        let d = state.center_of_mass(&cloth) - c0;
        if d.x.hypot(d.y) > SLIDE_DISTANCE {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Smallest tilt (degrees) at which the mesh slides, by bisection to `tol`.
pub fn onset_angle(mesh: &TriMesh, params: &ClothParams, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = (lo, hi);
    if slides(mesh, params, lo)? {
        return Ok(lo);
    }
    if !slides(mesh, params, hi)? {
        return Err(Error::CalibrationFailed(format!("no slide below {hi}°")));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if slides(mesh, params, mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FrictionCalibration {
    pub friction: f64,
    pub onset_angle_deg: f64,
    pub target_angle_deg: f64,
}

/// Binary search on μ so that the slide-onset tilt matches `target_angle_deg`
/// within 2°.
pub fn calibrate_friction(mesh: &TriMesh, target_angle_deg: f64, params: &ClothParams) -> Result<FrictionCalibration> {
    if !(target_angle_deg > 5.0 && target_angle_deg < 45.0) {
        return Err(Error::Domain(format!("target angle {target_angle_deg}° outside (5°, 45°)")));
    }
    let with_mu = |mu: f64| ClothParams { friction: mu, ..*params };
    let (mut lo, mut hi) = (0.0, 2.0);
    if !slides(mesh, &with_mu(lo), target_angle_deg)? || slides(mesh, &with_mu(hi), target_angle_deg)? {
        return Err(Error::CalibrationFailed("friction bracket [0, 2] does not straddle the target".into()));
    }
    while hi - lo > 2e-3 {
        let mid = 0.5 * (lo + hi);
        if slides(mesh, &with_mu(mid), target_angle_deg)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = hi;
    let onset = onset_angle(mesh, &with_mu(mu), (target_angle_deg - 10.0).max(0.5), (target_angle_deg + 10.0).min(60.0), 0.1)?;
    if (onset - target_angle_deg).abs() > 2.0 {
        return Err(Error::CalibrationFailed(format!("onset {onset:.2}° misses target {target_angle_deg}°")));
    }
    Ok(FrictionCalibration { friction: mu, onset_angle_deg: onset, target_angle_deg })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::garments::{towel_contour, DESK_EDGE_LENGTH};
    use crate::mesh::{grid_sheet, mesh_from_contour};

    #[test]
    fn frictionless_cloth_slides_on_slight_tilt() {
        let patch = grid_sheet(0.2, 0.2, 6, 6, 0.0);
        let p = ClothParams { friction: 0.0, ..Default::default() };
        assert!(slides(&patch, &p, 0.6).unwrap());
    }

    #[test]
    fn stiff_patch_obeys_coulomb() {
        let patch = grid_sheet(0.2, 0.2, 6, 6, 0.0);
        for mu in [0.25, 0.45] {
            let p = ClothParams { friction: mu, ..ClothParams::default().with_membrane(2000.0) };
            let onset = onset_angle(&patch, &p, 1.0, 40.0, 0.1).unwrap();
            let coulomb = f64::atan(mu).to_degrees();
            assert!((onset - coulomb).abs() < 0.5, "mu {mu}: {onset} vs {coulomb}");
        }
    }

    #[test]
    fn shear_calibration_hits_small_towel_target() {
        let m = mesh_from_contour(&towel_contour(0.4, 0.3).unwrap(), DESK_EDGE_LENGTH).unwrap();
        let pin = m.anchors()["corner_bl"];
        let c = calibrate_shear(&m, pin, 0.011, &ClothParams::default()).unwrap();
        assert!((c.achieved - 0.011).abs() <= 0.1 * 0.011, "{c:?}");
        let half = ClothParams::default().with_membrane(0.5 * c.stretch_stiffness);
        let (softer, _) = measure_shear_frac(&m, pin, &half).unwrap();
        assert!(softer > c.achieved);
    }

    #[test]
    fn calibration_targets_are_validated() {
        let m = grid_sheet(0.1, 0.1, 2, 2, 0.0);
        assert!(matches!(calibrate_shear(&m, 0, 0.5, &ClothParams::default()), Err(Error::Domain(_))));
        assert!(matches!(calibrate_friction(&m, 50.0, &ClothParams::default()), Err(Error::Domain(_))));
    }
}
