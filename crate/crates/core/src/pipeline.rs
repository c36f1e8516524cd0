//! End-to-end runs: database build, recognition, registration, regrasp and
//! fold optimization over one garment, with a JSON report per run and CSV
//! summaries across runs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::BinaryFeature;
use crate::garmentdb::{build_entries, mesh_feature, perturb_query, rank_entries, save_database, DbSettings, GarmentEntry, NoiseSpec};
use crate::grasp::{regrasp_loop, RegraspConfig};
use crate::mesh::garments::{Category, GarmentModel};
use crate::mesh::{load_anchors, load_obj, save_obj, TriMesh, Vec3};
use crate::metric::WeightVector;
use crate::registration::{mesh_to_mesh_error, register, DeformationParams};
use crate::sdf::{build_distance_field, DistanceField, GridSpec};
use crate::trajectory::{mirror_fold, optimize_trajectory, trajectory_cost, Arm, FoldSimSettings, FoldTask, TrajectoryLmSettings};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "DRAPEKIT_SEED";
pub const REPORT_FILE: &str = "report.json";
pub const STAGES: [&str; 5] = ["db_build", "recognition", "registration", "regrasp", "fold_optimize"];

/// Exit code for configuration errors detected before any compute.
pub const EXIT_INVALID: i32 = 2;
/// Exit code for a stage that failed at run time.
pub const EXIT_FAILED: i32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GarmentSource {
    pub id: String,
    pub category: Category,
    /// Flat garment mesh (OBJ).
    pub mesh: PathBuf,
    /// Anchor sidecar; defaults to `<mesh stem>.anchors.json` next to the mesh.
    #[serde(default)]
    pub anchors: Option<PathBuf>,
}

impl GarmentSource {
    pub fn anchors_path(&self) -> PathBuf {
        self.anchors.clone().unwrap_or_else(|| self.mesh.with_extension("anchors.json"))
    }

    pub fn load(&self) -> Result<GarmentModel> {
        let mesh = load_obj(&self.mesh)?.with_anchors(load_anchors(self.anchors_path())?)?;
        Ok(GarmentModel { id: self.id.clone(), category: self.category, mesh })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecognitionConfig {
    /// Degradation applied to every entry to form its query.
    pub noise: NoiseSpec,
    /// Learned weights (JSON); unit weights when absent.
    pub weights: Option<PathBuf>,
}

impl Default for RecognitionConfig {
    fn default() -> Self {
        Self { noise: NoiseSpec { jitter: 0.002, smoothing: 0, crop: 0.0 }, weights: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegistrationConfig {
    pub params: DeformationParams,
    /// Grid samples along the longest axis of each distance field.
    pub field_nodes: usize,
    /// Number of recognition queries registered (in entry order).
    pub max_pairs: usize,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self { params: DeformationParams::default(), field_nodes: 64, max_pairs: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldConfig {
    pub grasp_label: String,
    /// A point on the fold line and the normal of the side that is folded over.
    pub line_point: Vec3,
    pub line_normal: Vec3,
    #[serde(default)]
    pub sim: FoldSimSettings,
    #[serde(default)]
    pub lm: TrajectoryLmSettings,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_alpha() -> f64 {
    1e3
}

fn default_delta() -> f64 {
    0.1
}

impl FoldConfig {
    /// Single-arm fold task carrying the grasped anchor onto its mirror image.
    pub fn task(&self, garment: &TriMesh) -> Result<FoldTask> {
        let v = garment.anchor(&self.grasp_label).ok_or_else(|| Error::Validation(format!("garment has no anchor {}", self.grasp_label)))?;
        let target = mirror_fold(garment, self.line_point, self.line_normal)?;
        let mut task = FoldTask::new(garment.clone(), vec![Arm { vertex: v, target: target.vertices()[v] }], target)?;
        task.alpha = self.alpha;
        task.delta = self.delta;
        task.lm = self.lm;
        task.sim = self.sim;
        task.validate()?;
        Ok(task)
    }
}

fn default_verbosity() -> String {
    "info".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default = "default_verbosity")]
    pub verbosity: String,
    pub garment: GarmentSource,
    #[serde(default)]
    pub db: DbSettings,
    #[serde(default)]
    pub recognition: RecognitionConfig,
    #[serde(default)]
    pub registration: RegistrationConfig,
    pub regrasp: RegraspConfig,
    pub fold: FoldConfig,
}

impl RunConfig {
    /// Parses a config file. Relative paths are resolved against the file's
    /// directory, and `DRAPEKIT_SEED` (if set) replaces the seed.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        if let Some(seed) = seed_from_env()? {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        fix(&mut self.garment.mesh);
        if let Some(a) = self.garment.anchors.as_mut() {
            fix(a);
        }
        if let Some(w) = self.recognition.weights.as_mut() {
            fix(w);
        }
    }

    /// Checks everything that can be checked without simulating.
    pub fn validate(&self) -> Result<GarmentModel> {
        if !self.garment.mesh.is_file() {
            return Err(Error::Validation(format!("garment mesh {} does not exist", self.garment.mesh.display())));
        }
        if !self.garment_anchors_exist() {
            return Err(Error::Validation(format!("anchor file {} does not exist", self.garment.anchors_path().display())));
        }
        if let Some(w) = &self.recognition.weights {
            if !w.is_file() {
                return Err(Error::Validation(format!("weights file {} does not exist", w.display())));
            }
        }
        if log_level(&self.verbosity).is_none() {
            return Err(Error::Validation(format!("unknown verbosity {:?}", self.verbosity)));
        }
        self.db.validate()?;
        self.recognition.noise.validate()?;
        self.registration.params.validate()?;
        if self.registration.field_nodes < 8 {
            return Err(Error::Validation("registration field_nodes must be at least 8".into()));
        }
        self.regrasp.validate()?;
        let garment = self.garment.load()?;
        for label in [&self.regrasp.left_label, &self.regrasp.right_label, &self.fold.grasp_label] {
            if garment.mesh.anchor(label).is_none() {
                return Err(Error::Validation(format!("garment {} has no anchor {label}", garment.id)));
            }
        }
        self.regrasp.initial.resolve(&garment.mesh)?;
        self.fold.task(&garment.mesh).map_err(|e| Error::Validation(format!("fold task: {e}")))?;
        Ok(garment)
    }

    fn garment_anchors_exist(&self) -> bool {
        self.garment.anchors_path().is_file()
    }
}

/// Reads `DRAPEKIT_SEED`, if set.
pub fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| Error::Validation(format!("{SEED_ENV}={s:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

pub fn log_level(verbosity: &str) -> Option<log::LevelFilter> {
    match verbosity {
        "off" | "quiet" => Some(log::LevelFilter::Off),
        "error" => Some(log::LevelFilter::Error),
        "warn" => Some(log::LevelFilter::Warn),
        "info" => Some(log::LevelFilter::Info),
        "debug" => Some(log::LevelFilter::Debug),
        "trace" => Some(log::LevelFilter::Trace),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub seconds: f64,
    pub error_kind: Option<String>,
    pub error: Option<String>,
    /// Files written by the stage, relative to the output directory.
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRow {
    pub category: Category,
    pub query: String,
    pub predicted: String,
    pub score: f64,
    pub correct: bool,
}

/// Registration error in both directions after the rigid stage (R) and after
/// rigid plus non-rigid (R+N).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationRow {
    pub source: String,
    pub target: String,
    pub s_to_t_r: f64,
    pub t_to_s_r: f64,
    pub s_to_t_rn: f64,
    pub t_to_s_rn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRow {
    pub garment: String,
    pub trajectory: String,
    pub cost: Option<f64>,
    pub length: f64,
    pub dissimilarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegraspSummary {
    pub grasp: (usize, usize),
    pub score: Option<f64>,
    pub xi: f64,
    pub converged: bool,
    pub iterations: usize,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub garment: String,
    pub success: bool,
    pub failed_stage: Option<String>,
    pub error_kind: Option<String>,
    pub stages: Vec<StageRecord>,
    pub retrieval: Vec<RetrievalRow>,
    pub registration: Vec<RegistrationRow>,
    pub regrasp: Option<RegraspSummary>,
    pub folds: Vec<FoldRow>,
}

impl PipelineReport {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(REPORT_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// The report with every timing field zeroed.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.stages.iter_mut().for_each(|s| s.seconds = 0.0);
        r
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn rel(out: &Path, p: &Path) -> String {
    p.strip_prefix(out).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

fn field_for(mesh: &TriMesh, nodes: usize) -> Result<DistanceField> {
    build_distance_field(mesh, Some(GridSpec::fit_nodes(mesh, nodes)?))
}

struct Context {
    cfg: RunConfig,
    garment: GarmentModel,
    entries: Vec<GarmentEntry>,
    weights: Option<WeightVector>,
    queries: Vec<TriMesh>,
    matches: Vec<usize>,
}

impl Context {
    fn out(&self) -> &Path {
        &self.cfg.out_dir
    }

    fn db_build(&mut self, report: &mut PipelineReport) -> Result<Vec<String>> {
        self.entries = build_entries(std::slice::from_ref(&self.garment), &self.cfg.db)?;
        let root = self.out().join("db");
        save_database(&self.entries, &self.cfg.db, &root)?;
        let mut files = vec![rel(self.out(), &root.join(crate::garmentdb::MANIFEST_FILE))];
        for e in &self.entries {
            let dir = root.join(&e.garment_id).join(&e.grasp_label);
            files.extend(["drape.obj", "anchors.json", "feat.bin"].iter().map(|f| rel(self.out(), &dir.join(f))));
        }
        report.garment = self.garment.id.clone();
        Ok(files)
    }

    fn recognition(&mut self, report: &mut PipelineReport) -> Result<Vec<String>> {
        let w = match &self.cfg.recognition.weights {
            Some(p) => WeightVector::load(p)?,
            None => WeightVector::ones(self.cfg.db.feature),
        };
        let dir = self.out().join("recognition");
        let mut files = Vec::new();
        for (i, e) in self.entries.iter().enumerate() {
            let q = perturb_query(e, &self.cfg.recognition.noise, self.cfg.seed.wrapping_add(i as u64))?;
            let f: BinaryFeature = mesh_feature(&q, &self.cfg.db)?;
            let best = &rank_entries(&f, &self.entries, &w)?[0];
            let name = format!("{}_{}", e.garment_id, e.grasp_label);
            let obj = dir.join(format!("{name}.obj"));
            let feat = dir.join(format!("{name}.bin"));
            std::fs::create_dir_all(&dir).map_err(|err| Error::io(&dir, err))?;
            save_obj(&q, &obj)?;
            f.save(&feat)?;
            files.push(rel(self.out(), &obj));
            files.push(rel(self.out(), &feat));
            let predicted = &self.entries[best.label];
            report.retrieval.push(RetrievalRow {
                category: e.category,
                query: e.id(),
                predicted: predicted.id(),
                score: best.score,
                correct: predicted.id() == e.id(),
            });
            self.queries.push(q);
            self.matches.push(best.label);
        }
        self.weights = Some(w);
        Ok(files)
    }

    fn registration(&mut self, report: &mut PipelineReport) -> Result<Vec<String>> {
        let rc = self.cfg.registration;
        let dir = self.out().join("registration");
        let mut files = Vec::new();
        for (i, q) in self.queries.iter().enumerate().take(rc.max_pairs) {
            let src = &self.entries[self.matches[i]];
            let q_field = field_for(q, rc.field_nodes)?;
            let reg = register(&src.draped_mesh, q, &q_field, &rc.params)?;
            let rigid_field = field_for(&reg.rigid, rc.field_nodes)?;
            let rn_field = field_for(&reg.nonrigid.mesh, rc.field_nodes)?;
            report.registration.push(RegistrationRow {
                source: src.id(),
                target: format!("query:{}", self.entries[i].id()),
                s_to_t_r: reg.error_rigid,
                t_to_s_r: mesh_to_mesh_error(q, &rigid_field)?,
                s_to_t_rn: reg.error_nonrigid,
                t_to_s_rn: mesh_to_mesh_error(q, &rn_field)?,
            });
            let obj = dir.join(format!("{}_{}.obj", self.entries[i].garment_id, self.entries[i].grasp_label));
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            save_obj(&reg.nonrigid.mesh, &obj)?;
            files.push(rel(self.out(), &obj));
        }
        Ok(files)
    }

    fn regrasp(&mut self, report: &mut PipelineReport) -> Result<Vec<String>> {
        let mut cfg = self.cfg.regrasp.clone();
        cfg.seed = self.cfg.seed;
        let w = self.weights.clone().unwrap_or_else(|| WeightVector::ones(self.cfg.db.feature));
        let outcome = regrasp_loop(&self.entries, &self.cfg.db, &self.garment.mesh, self.garment.category, &cfg, &w)?;
        let path = self.out().join("regrasp").join("trace.json");
        write_json(&path, &outcome.trace)?;
        report.regrasp = Some(RegraspSummary {
            grasp: outcome.grasp,
            score: finite(outcome.score),
            xi: outcome.xi,
            converged: outcome.converged,
            iterations: outcome.trace.len(),
            aborted: outcome.aborted.clone(),
        });
        if let Some(msg) = outcome.aborted {
            return Err(Error::NumericalFailure(msg));
        }
        Ok(vec![rel(self.out(), &path)])
    }

    fn fold(&mut self, report: &mut PipelineReport) -> Result<Vec<String>> {
        let task = self.cfg.fold.task(&self.garment.mesh)?;
        let result = optimize_trajectory(&task)?;
        let dir = self.out().join("fold");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let folded = task.simulate(&result.curves)?;
        let paths = [dir.join("target.obj"), dir.join("folded.obj"), dir.join("trajectory.json")];
        save_obj(&task.target, &paths[0])?;
        save_obj(&folded, &paths[1])?;
        write_json(&paths[2], &result)?;
        let initial = trajectory_cost(&task, &task.initial_x()?)?;
        for (name, c) in [("initial", initial), ("optimized", result.last)] {
            report.folds.push(FoldRow {
                garment: self.garment.id.clone(),
                trajectory: name.into(),
                cost: finite(c.cost),
                length: c.length,
                dissimilarity: finite(c.dissimilarity),
            });
        }
        Ok(paths.iter().map(|p| rel(self.out(), p)).collect())
    }
}

/// Runs every stage in order, writing `report.json` into the output
/// directory. Returns the exit code and the report.
pub fn run_pipeline(cfg: &RunConfig) -> (i32, PipelineReport) {
    let mut report = PipelineReport { seed: cfg.seed, garment: cfg.garment.id.clone(), ..Default::default() };
    let garment = match cfg.validate() {
        Ok(g) => g,
        Err(e) => {
            let kind = match e {
                Error::Io { .. } | Error::Parse { .. } => "ValidationError",
                ref other => other.kind(),
            };
            report.failed_stage = Some("validate".into());
            report.error_kind = Some(kind.into());
            report.stages.push(StageRecord {
                name: "validate".into(),
                status: StageStatus::Failed,
                seconds: 0.0,
                error_kind: Some(kind.into()),
                error: Some(e.to_string()),
                files: Vec::new(),
            });
            return (EXIT_INVALID, report);
        }
    };
    let mut ctx = Context { cfg: cfg.clone(), garment, entries: Vec::new(), weights: None, queries: Vec::new(), matches: Vec::new() };
    let mut failed = false;
    for name in STAGES {
        if failed {
            report.stages.push(StageRecord { name: name.into(), status: StageStatus::Skipped, seconds: 0.0, error_kind: None, error: None, files: Vec::new() });
            continue;
        }
        log::info!("stage {name}");
        let t = Instant::now();
        let result = match name {
            "db_build" => ctx.db_build(&mut report),
            "recognition" => ctx.recognition(&mut report),
            "registration" => ctx.registration(&mut report),
            "regrasp" => ctx.regrasp(&mut report),
            _ => ctx.fold(&mut report),
        };
        let seconds = t.elapsed().as_secs_f64();
        match result {
            Ok(files) => report.stages.push(StageRecord { name: name.into(), status: StageStatus::Ok, seconds, error_kind: None, error: None, files }),
            Err(e) => {
                log::error!("stage {name} failed: {e}");
                failed = true;
                report.failed_stage = Some(name.into());
                report.error_kind = Some(e.kind().into());
                report.stages.push(StageRecord {
                    name: name.into(),
                    status: StageStatus::Failed,
                    seconds,
                    error_kind: Some(e.kind().into()),
                    error: Some(e.to_string()),
                    files: Vec::new(),
                });
            }
        }
    }
    report.success = !failed;
    let code = if failed { EXIT_FAILED } else { 0 };
    if let Err(e) = write_json(&cfg.out_dir.join(REPORT_FILE), &report) {
        log::error!("could not write report: {e}");
        return (EXIT_FAILED, report);
    }
    (code, report)
}

/// CSV summaries across completed runs.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTables {
    pub registration: String,
    pub retrieval: String,
    pub folds: String,
}

pub const REGISTRATION_COLUMNS: [&str; 4] = ["S to T (R)", "T to S (R)", "S to T (R+N)", "T to S (R+N)"];

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Validation(format!("csv: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Validation(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "inf".into(), |v| v.to_string())
}

/// Builds the tables from the reports of the given run directories.
pub fn eval_tables(reports: &[PipelineReport]) -> Result<EvalTables> {
    if reports.is_empty() {
        return Err(Error::NoData("no run reports given".into()));
    }
    let mut reg_rows = Vec::new();
    let mut cats: std::collections::BTreeMap<Category, (usize, usize)> = Default::default();
    let mut fold_rows = Vec::new();
    for r in reports {
        for row in &r.registration {
            reg_rows.push(vec![
                format!("{} -> {}", row.source, row.target),
                row.s_to_t_r.to_string(),
                row.t_to_s_r.to_string(),
                row.s_to_t_rn.to_string(),
                row.t_to_s_rn.to_string(),
            ]);
        }
        for row in &r.retrieval {
            let c = cats.entry(row.category).or_default();
            c.0 += 1;
            c.1 += row.correct as usize;
        }
        for row in &r.folds {
            fold_rows.push(vec![row.garment.clone(), row.trajectory.clone(), opt(row.cost), row.length.to_string(), opt(row.dissimilarity)]);
        }
    }
    let mut reg_header = vec!["pair"];
    reg_header.extend(REGISTRATION_COLUMNS);
    let retrieval_rows = cats
        .iter()
        .map(|(c, (n, k))| vec![c.to_string(), n.to_string(), k.to_string(), (*k as f64 / *n as f64).to_string()])
        .collect();
    Ok(EvalTables {
        registration: csv_string(&reg_header, reg_rows)?,
        retrieval: csv_string(&["category", "queries", "correct", "accuracy"], retrieval_rows)?,
        folds: csv_string(&["garment", "trajectory", "cost", "length", "dissimilarity"], fold_rows)?,
    })
}

/// Loads `report.json` from each directory and builds the tables.
pub fn eval_dirs(dirs: &[PathBuf]) -> Result<EvalTables> {
    let reports = dirs.iter().map(PipelineReport::load).collect::<Result<Vec<_>>>()?;
    eval_tables(&reports)
}
