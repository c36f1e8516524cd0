//! Grasp evaluation and the simulated regrasp loop.
//!
//! The objective scores a grasp pair `(x_L, x_R)` against the desired pair
//! `(x*_L, x*_R)`: every anchor pair `(l, r)` of `S_g × S_g` contributes
//! `σ_l‖x_L − x*_L‖² + σ_r‖x_R − x*_R‖² − ln p(l, r)`, and the log-score is
//! the negated sum. Positions live in the flat (rest) frame of the garment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clothsim::simulate_hang_report;
use crate::error::{Error, Result};
use crate::garmentdb::{mesh_feature, perturb_mesh, rank_entries, DbSettings, GarmentEntry, NoiseSpec};
use crate::mesh::garments::Category;
use crate::mesh::{TriMesh, Vec3};
use crate::metric::WeightVector;
use crate::registration::{register, DeformationParams, RigidTransform};
use crate::sdf::{build_distance_field, GridSpec};

/// Probabilities below this are clamped before taking the logarithm.
pub const MIN_PRIOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorPoint {
    pub label: String,
    pub position: Vec3,
}

/// Anchors of a mesh at its current vertex positions, in label order.
pub fn anchor_points(mesh: &TriMesh) -> Vec<AnchorPoint> {
    mesh.anchors().iter().map(|(l, &v)| AnchorPoint { label: l.clone(), position: mesh.vertices()[v] }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorEntry {
    pub left: String,
    pub right: String,
    pub p: f64,
}

/// `p(l, r | y)` over anchor pairs. An empty table means uniform.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnchorPrior(pub Vec<PriorEntry>);

impl AnchorPrior {
    pub fn uniform() -> Self {
        Self(Vec::new())
    }

    pub fn is_uniform(&self) -> bool {
        self.0.is_empty()
    }

    fn table(&self) -> BTreeMap<(&str, &str), f64> {
        self.0.iter().map(|e| ((e.left.as_str(), e.right.as_str()), e.p)).collect()
    }

    /// Checks that a tabulated prior is a distribution over `S_g × S_g`.
    pub fn validate(&self, anchors: &[AnchorPoint]) -> Result<()> {
        if self.is_uniform() {
            return Ok(());
        }
        let labels: std::collections::BTreeSet<&str> = anchors.iter().map(|a| a.label.as_str()).collect();
        let mut total = 0.0;
        for e in &self.0 {
            if !(e.p >= 0.0 && e.p <= 1.0) {
                return Err(Error::Validation(format!("prior p({}, {}) = {} is not a probability", e.left, e.right, e.p)));
            }
            if !labels.contains(e.left.as_str()) || !labels.contains(e.right.as_str()) {
                return Err(Error::Validation(format!("prior pair ({}, {}) is not in the anchor set", e.left, e.right)));
            }
            total += e.p;
        }
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!("prior sums to {total}, not 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspObjectiveSpec {
    pub desired_left: Vec3,
    pub desired_right: Vec3,
    pub sigma_left: f64,
    pub sigma_right: f64,
    #[serde(default)]
    pub prior: AnchorPrior,
    /// Convergence threshold on the log-score.
    pub xi: f64,
}

impl GraspObjectiveSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_left > 0.0 && self.sigma_right > 0.0) || !self.sigma_left.is_finite() || !self.sigma_right.is_finite() {
            return Err(Error::Validation("grasp widths must be positive and finite".into()));
        }
        if !self.xi.is_finite() {
            return Err(Error::Validation("xi must be finite".into()));
        }
        if !(self.desired_left.iter().chain(self.desired_right.iter()).all(|v| v.is_finite())) {
            return Err(Error::Validation("desired grasp points must be finite".into()));
        }
        Ok(())
    }

    /// Threshold `fraction` of the way to the desired-pair score: for a
    /// negative score `s*` this is `s* − (1 − fraction)|s*|`.
    pub fn threshold_from_desired(&self, anchors: &[AnchorPoint], fraction: f64) -> Result<f64> {
        let best = grasp_objective(self, &self.desired_left, &self.desired_right, anchors)?.ln_f;
        Ok(best - (1.0 - fraction) * best.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub ln_f: f64,
    /// Set when a zero prior probability was clamped to [`MIN_PRIOR`].
    pub clamped: bool,
}

/// Log-score of the grasp pair `(x_L, x_R)` over the anchor set `S_g`.
pub fn grasp_objective(spec: &GraspObjectiveSpec, x_left: &Vec3, x_right: &Vec3, anchors: &[AnchorPoint]) -> Result<ObjectiveValue> {
    spec.validate()?;
    if anchors.is_empty() {
        return Err(Error::Domain("anchor set is empty".into()));
    }
    spec.prior.validate(anchors)?;
    let dist = spec.sigma_left * (x_left - spec.desired_left).norm_squared() + spec.sigma_right * (x_right - spec.desired_right).norm_squared();
    let uniform = 1.0 / (anchors.len() * anchors.len()) as f64;
    let table = spec.prior.table();
    let mut clamped = false;
    let mut sum = 0.0;
    for l in anchors {
        for r in anchors {
            let p = if spec.prior.is_uniform() { uniform } else { table.get(&(l.label.as_str(), r.label.as_str())).copied().unwrap_or(0.0) };
            let p = if p < MIN_PRIOR {
                clamped = true;
                MIN_PRIOR
            } else {
                p
            };
            sum += dist - p.ln();
        }
    }
    if clamped {
        log::warn!("grasp prior has zero-probability pairs; clamped to {MIN_PRIOR:e}");
    }
    Ok(ObjectiveValue { ln_f: -sum, clamped })
}

/// Range readings at uniform lateral spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanProfile {
    pub samples: Vec<f64>,
    pub spacing: f64,
}

impl ScanProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.spacing > 0.0) {
            return Err(Error::Validation("scan spacing must be positive".into()));
        }
        if let Some(i) = self.samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("scan sample {i} is not finite")));
        }
        Ok(())
    }
}

/// Second derivative of an unnormalized Gaussian sampled on `[−⌈4σ⌉, ⌈4σ⌉]`
/// and shifted to zero sum.
pub fn log_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("kernel width must be positive, got {sigma}")));
    }
    let half = (4.0 * sigma).ceil() as i64;
    let s2 = sigma * sigma;
    let mut k: Vec<f64> = (-half..=half)
        .map(|j| {
            let x = j as f64;
            (x * x / (s2 * s2) - 1.0 / s2) * (-x * x / (2.0 * s2)).exp()
        })
        .collect();
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    k.iter_mut().for_each(|v| *v -= mean);
    Ok(k)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    pub best: usize,
    pub response: Vec<f64>,
}

/// Filters the profile with a Laplacian-of-Gaussian of width `sigma`
/// (in samples, edges clamped) and returns the first minimum.
pub fn curvature_scan(profile: &ScanProfile, sigma: f64) -> Result<ScanResult> {
    profile.validate()?;
    let k = log_kernel(sigma)?;
    let n = profile.samples.len();
    if n < k.len() {
        return Err(Error::SignalTooShort { len: n, needed: k.len() });
    }
    let half = (k.len() / 2) as i64;
    let s = &profile.samples;
    let response: Vec<f64> = (0..n as i64)
        .map(|i| k.iter().enumerate().map(|(j, kj)| kj * s[(i + j as i64 - half).clamp(0, n as i64 - 1) as usize]).sum())
        .collect();
    let mut best = 0;
    for (i, r) in response.iter().enumerate() {
        if *r < response[best] {
            best = i;
        }
    }
    Ok(ScanResult { best, response })
}

fn ray_triangle(o: &Vec3, d: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-15 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 0.0).then_some(t)
}

/// Horizontal range scan of `mesh` at height `z`: a sensor on the plane
/// `y = sensor_y` looks along +y from `samples` positions spread over
/// `[x0, x1]`. Misses read `max_range`.
pub fn horizontal_scan(mesh: &TriMesh, z: f64, x0: f64, x1: f64, samples: usize, sensor_y: f64, max_range: f64) -> Result<ScanProfile> {
    if samples < 2 || !(x1 > x0) {
        return Err(Error::Domain("scan needs at least two samples over a non-empty interval".into()));
    }
    let spacing = (x1 - x0) / (samples - 1) as f64;
    let dir = Vec3::new(0.0, 1.0, 0.0);
    let samples = (0..samples)
        .map(|i| {
            let o = Vec3::new(x0 + i as f64 * spacing, sensor_y, z);
            (0..mesh.triangle_count())
                .filter_map(|t| {
                    let [a, b, c] = mesh.corners(t);
                    ray_triangle(&o, &dir, &a, &b, &c)
                })
                .fold(max_range, f64::min)
        })
        .collect();
    Ok(ScanProfile { samples, spacing })
}

/// Configuration of one simulated regrasp run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegraspConfig {
    /// Anchor the first gripper should end up holding.
    pub left_label: String,
    /// Anchor the second gripper should end up holding.
    pub right_label: String,
    #[serde(default = "default_sigma")]
    pub sigma_left: f64,
    #[serde(default = "default_sigma")]
    pub sigma_right: f64,
    #[serde(default)]
    pub prior: AnchorPrior,
    /// Explicit threshold; derived from `xi_fraction` when absent.
    #[serde(default)]
    pub xi: Option<f64>,
    #[serde(default = "default_xi_fraction")]
    pub xi_fraction: f64,
    /// First grasp, as a vertex index or an anchor label.
    pub initial: InitialGrasp,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub registration: DeformationParams,
    /// Grid samples along the longest axis of the query distance field.
    #[serde(default = "default_field_nodes")]
    pub field_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialGrasp {
    Vertex(usize),
    Label(String),
}

impl InitialGrasp {
    pub fn resolve(&self, mesh: &TriMesh) -> Result<usize> {
        match self {
            InitialGrasp::Vertex(v) if *v < mesh.vertex_count() => Ok(*v),
            InitialGrasp::Vertex(v) => Err(Error::Validation(format!("initial vertex {v} out of range"))),
            InitialGrasp::Label(l) => mesh.anchor(l).ok_or_else(|| Error::Validation(format!("garment has no anchor {l}"))),
        }
    }
}

fn default_sigma() -> f64 {
    200.0
}

fn default_xi_fraction() -> f64 {
    0.9
}

fn default_max_iters() -> usize {
    4
}

fn default_field_nodes() -> usize {
    64
}

impl RegraspConfig {
    pub fn new(left: &str, right: &str, initial: InitialGrasp) -> Self {
        Self {
            left_label: left.into(),
            right_label: right.into(),
            sigma_left: default_sigma(),
            sigma_right: default_sigma(),
            prior: AnchorPrior::uniform(),
            xi: None,
            xi_fraction: default_xi_fraction(),
            initial,
            max_iters: default_max_iters(),
            noise: NoiseSpec::default(),
            seed: 0,
            registration: DeformationParams::default(),
            field_nodes: default_field_nodes(),
        }
    }

    /// Objective spec with desired points taken from the flat garment.
    pub fn objective(&self, garment: &TriMesh) -> Result<GraspObjectiveSpec> {
        let at = |label: &str| {
            garment.anchor(label).map(|v| garment.vertices()[v]).ok_or_else(|| Error::Validation(format!("garment has no anchor {label}")))
        };
        let mut spec = GraspObjectiveSpec {
            desired_left: at(&self.left_label)?,
            desired_right: at(&self.right_label)?,
            sigma_left: self.sigma_left,
            sigma_right: self.sigma_right,
            prior: self.prior.clone(),
            xi: 0.0,
        };
        spec.xi = match self.xi {
            Some(x) => x,
            None => spec.threshold_from_desired(&anchor_points(garment), self.xi_fraction)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Validation("max_iters must be at least 1".into()));
        }
        if self.noise.crop != 0.0 {
            return Err(Error::Validation("regrasp queries must keep every vertex (crop = 0)".into()));
        }
        self.noise.validate()?;
        self.registration.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegraspStep {
    pub iteration: usize,
    pub held_vertex: usize,
    pub matched_entry: String,
    pub match_score: f64,
    /// Higher-ranked entries of another category that were skipped.
    pub category_mismatches: Vec<String>,
    pub target_label: String,
    pub next_vertex: usize,
    pub registration_error_rigid: f64,
    pub registration_error: f64,
    pub registration_retried: bool,
    pub score: f64,
    pub prior_clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegraspOutcome {
    /// Held vertex and the vertex grasped by the other gripper.
    pub grasp: (usize, usize),
    pub score: f64,
    pub xi: f64,
    pub converged: bool,
    /// Set when registration failed twice; `grasp` is then the best pair so far.
    pub aborted: Option<String>,
    pub trace: Vec<RegraspStep>,
}

fn rotate_about_vertical(mesh: &TriMesh, angle: f64) -> Result<TriMesh> {
    let c = mesh.area_weighted_center()?;
    let r = nalgebra::Rotation3::from_axis_angle(&Vec3::z_axis(), angle).into_inner();
    let t = RigidTransform { rotation: r, translation: c - r * c };
    Ok(t.transform_mesh(mesh))
}

/// Hang, recognize, register and regrasp until the grasp pair scores at
/// least `ξ` or `max_iters` iterations have run.
///
/// `db` must hold drapes of this very garment (same connectivity), and the
/// hang uses the database's simulator settings.
pub fn regrasp_loop(
    db: &[GarmentEntry],
    db_settings: &DbSettings,
    garment: &TriMesh,
    category: Category,
    cfg: &RegraspConfig,
    w: &WeightVector,
) -> Result<RegraspOutcome> {
    cfg.validate()?;
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let spec = cfg.objective(garment)?;
    let anchors = anchor_points(garment);
    let rest = garment.vertices();
    let mut held = cfg.initial.resolve(garment)?;
    let mut score = f64::NEG_INFINITY;
    let mut best: Option<((usize, usize), f64)> = None;
    let mut trace = Vec::new();
    let mut aborted = None;
    let mut iteration = 0;
    while score < spec.xi && iteration < cfg.max_iters {
        iteration += 1;
        let (hung, _) = simulate_hang_report(garment, held, &db_settings.cloth, &db_settings.settle)?;
        let query = perturb_mesh(&hung, &cfg.noise, cfg.seed.wrapping_add(iteration as u64))?;
        let feature = mesh_feature(&query, db_settings)?;
        let ranked = rank_entries(&feature, db, w)?;
        let mut mismatches = Vec::new();
        let Some(m) = ranked.iter().find(|m| {
            let same = db[m.label].category == category;
            if !same {
                mismatches.push(db[m.label].id());
            }
            same
        }) else {
            return Err(Error::CategoryMismatch { expected: category.to_string(), found: db[ranked[0].label].category.to_string() });
        };
        let entry = &db[m.label];
        if entry.draped_mesh.vertex_count() != garment.vertex_count() {
            return Err(Error::Domain(format!("database entry {} does not share the garment's vertices", entry.id())));
        }
        let target_label = if entry.grasp_label == cfg.left_label { &cfg.right_label } else { &cfg.left_label };
        let anchor = entry
            .draped_mesh
            .anchor(target_label)
            .ok_or_else(|| Error::Validation(format!("entry {} lacks anchor {target_label}", entry.id())))?;
        let field = build_distance_field(&query, Some(GridSpec::fit_nodes(&query, cfg.field_nodes)?))?;
        let mut retried = false;
        let reg = match register(&entry.draped_mesh, &query, &field, &cfg.registration) {
            Ok(r) => Ok(r),
            Err(first) => {
                retried = true;
                log::warn!("registration of {} failed ({first}); retrying from a rotated start", entry.id());
                register(&rotate_about_vertical(&entry.draped_mesh, 0.1)?, &query, &field, &cfg.registration)
            }
        };
        let reg = match reg {
            Ok(r) => r,
            Err(e) => {
                aborted = Some(format!("registration failed twice at iteration {iteration}: {e}"));
                break;
            }
        };
        let mapped = reg.nonrigid.mesh.vertices()[anchor];
        let next = query.nearest_vertex(&mapped).expect("non-empty mesh");
        let value = grasp_objective(&spec, &rest[held], &rest[next], &anchors)?;
        score = value.ln_f;
        trace.push(RegraspStep {
            iteration,
            held_vertex: held,
            matched_entry: entry.id(),
            match_score: m.score,
            category_mismatches: mismatches,
            target_label: target_label.clone(),
            next_vertex: next,
            registration_error_rigid: reg.error_rigid,
            registration_error: reg.error_nonrigid,
            registration_retried: retried,
            score,
            prior_clamped: value.clamped,
        });
        if best.is_none_or(|(_, s)| score > s) {
            best = Some(((held, next), score));
        }
        if score < spec.xi {
            held = next;
        }
    }
    let (grasp, best_score) = best.unwrap_or(((held, held), f64::NEG_INFINITY));
    let (grasp, score) = if aborted.is_some() { (grasp, best_score) } else { (trace.last().map_or(grasp, |s| (s.held_vertex, s.next_vertex)), score) };
    Ok(RegraspOutcome { grasp, score, xi: spec.xi, converged: score >= spec.xi, aborted, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> Vec<AnchorPoint> {
        [("a", 0.0, 0.0), ("b", 0.1, 0.0), ("c", 0.0, 0.2)]
            .iter()
            .map(|&(l, x, y)| AnchorPoint { label: l.into(), position: Vec3::new(x, y, 0.0) })
            .collect()
    }

    fn spec() -> GraspObjectiveSpec {
        GraspObjectiveSpec {
            desired_left: Vec3::new(0.0, 0.0, 0.0),
            desired_right: Vec3::new(0.1, 0.0, 0.0),
            sigma_left: 50.0,
            sigma_right: 80.0,
            prior: AnchorPrior::uniform(),
            xi: -100.0,
        }
    }

    #[test]
    fn hand_example_with_table() {
        let labels = ["a", "b", "c"];
        let probs = [[0.3, 0.2, 0.0], [0.1, 0.1, 0.05], [0.05, 0.1, 0.1]];
        let mut s = spec();
        s.prior = AnchorPrior(
            labels
                .iter()
                .enumerate()
                .flat_map(|(i, l)| labels.iter().enumerate().map(move |(j, r)| PriorEntry { left: (*l).into(), right: (*r).into(), p: probs[i][j] }))
                .collect(),
        );
        let xl = Vec3::new(0.02, 0.01, 0.0);
        let xr = Vec3::new(0.1, 0.05, 0.0);
        // Distance part: 50·(0.0004 + 0.0001) + 80·0.0025 = 0.025 + 0.2 = 0.225 per term.
        let logs: f64 = probs.iter().flatten().map(|&p: &f64| p.max(1e-12).ln()).sum();
        let expected = -(9.0 * 0.225 - logs);
        let v = grasp_objective(&s, &xl, &xr, &three()).unwrap();
        assert!((v.ln_f - expected).abs() < 1e-9, "{} vs {expected}", v.ln_f);
        assert!(v.clamped);
    }

    #[test]
    fn desired_pair_is_the_peak() {
        let s = spec();
        let degenerate = vec![AnchorPoint { label: "l".into(), position: s.desired_left }];
        let peak = grasp_objective(&s, &s.desired_left, &s.desired_right, &degenerate).unwrap();
        assert!(!peak.clamped);
        for dx in [-0.05, -0.01, 0.01, 0.03] {
            let off = Vec3::new(dx, 0.0, 0.0);
            assert!(grasp_objective(&s, &(s.desired_left + off), &s.desired_right, &degenerate).unwrap().ln_f < peak.ln_f);
            assert!(grasp_objective(&s, &s.desired_left, &(s.desired_right + off), &degenerate).unwrap().ln_f < peak.ln_f);
        }
    }

    #[test]
    fn doubling_sigma_lowers_the_score() {
        let mut s = spec();
        let xl = Vec3::new(0.03, 0.0, 0.0);
        let a = grasp_objective(&s, &xl, &s.desired_right.clone(), &three()).unwrap().ln_f;
        s.sigma_left *= 2.0;
        let b = grasp_objective(&s, &xl, &s.desired_right.clone(), &three()).unwrap().ln_f;
        assert!(b < a);
    }

    #[test]
    fn bad_priors_and_widths_are_rejected() {
        let mut s = spec();
        s.prior = AnchorPrior(vec![PriorEntry { left: "a".into(), right: "b".into(), p: 0.5 }]);
        assert!(matches!(grasp_objective(&s, &Vec3::zeros(), &Vec3::zeros(), &three()), Err(Error::Validation(_))));
        let mut s = spec();
        s.sigma_right = 0.0;
        assert!(grasp_objective(&s, &Vec3::zeros(), &Vec3::zeros(), &three()).is_err());
    }

    #[test]
    fn threshold_for_negative_scores() {
        let s = spec();
        let best = grasp_objective(&s, &s.desired_left, &s.desired_right, &three()).unwrap().ln_f;
        assert!((best - 9.0 * (1.0f64 / 9.0).ln()).abs() < 1e-12);
        let xi = s.threshold_from_desired(&three(), 0.9).unwrap();
        assert!((xi - 1.1 * best).abs() < 1e-12);
    }

    #[test]
    fn kernel_has_zero_sum_and_negative_center() {
        let k = log_kernel(10.0).unwrap();
        assert_eq!(k.len(), 81);
        assert!(k.iter().sum::<f64>().abs() < 1e-12);
        assert!(k[40] < 0.0 && (k[40] - k.iter().cloned().fold(f64::INFINITY, f64::min)).abs() < 1e-15);
    }

    #[test]
    fn constant_profile_has_no_response() {
        let p = ScanProfile { samples: vec![0.73; 200], spacing: 0.001 };
        let r = curvature_scan(&p, 10.0).unwrap();
        assert!(r.response.iter().all(|v| v.abs() < 1e-9));
        assert_eq!(r.best, 0);
    }

    #[test]
    fn short_profile_is_rejected() {
        let p = ScanProfile { samples: vec![0.0; 80], spacing: 0.001 };
        assert!(matches!(curvature_scan(&p, 10.0), Err(Error::SignalTooShort { len: 80, needed: 81 })));
    }

    #[test]
    fn scan_of_a_cylinder_sees_its_front() {
        let m = crate::mesh::cylinder_mesh(0.0, 0.5, 0.1, 0.0, 1.0, 64);
        let p = horizontal_scan(&m, 0.5, -0.2, 0.2, 101, 0.0, 2.0).unwrap();
        assert!((p.samples[50] - 0.4).abs() < 1e-3);
        assert_eq!(p.samples[0], 2.0);
        assert!((p.spacing - 0.004).abs() < 1e-12);
    }
}
