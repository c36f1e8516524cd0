use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use drapekit::clothsim::{calibrate_friction, calibrate_shear, simulate_fold, simulate_hang_report, ClothParams, PinTrajectory, SettleSettings};
use drapekit::garmentdb::{build_database, load_calibration_set, load_database, mesh_feature, rank_entries, DbSettings};
use drapekit::grasp::{regrasp_loop, RegraspConfig};
use drapekit::mesh::garments::{Category, GarmentModel};
use drapekit::mesh::{load_anchors, load_obj, save_obj, TriMesh};
use drapekit::metric::{learn_weights, LearnSettings, WeightVector};
use drapekit::pipeline::{eval_dirs, log_level, run_pipeline, seed_from_env, FoldConfig, RunConfig, EXIT_FAILED, EXIT_INVALID};
use drapekit::registration::{register, DeformationParams};
use drapekit::sdf::{build_distance_field, GridSpec};
use drapekit::trajectory::{optimize_trajectory, BezierCurve, FoldSimSettings};
use drapekit::{Error, Result};

#[derive(Parser)]
#[command(name = "drapekit", version, about = "Garment drape database, recognition, registration, cloth simulation and fold planning")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log level: off, error, warn, info, debug, trace.
    #[arg(long, global = true, default_value = "warn")]
    verbosity: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulated drape database.
    #[command(subcommand)]
    Db(DbCmd),
    /// Binary shape features.
    #[command(subcommand)]
    Feature(FeatureCmd),
    /// Bit-weight learning.
    #[command(subcommand)]
    Metric(MetricCmd),
    /// Rigid plus non-rigid registration of one mesh onto another.
    Register(RegisterArgs),
    /// Cloth simulation scenarios.
    #[command(subcommand)]
    Sim(SimCmd),
    /// Fold trajectory optimization.
    #[command(subcommand)]
    Fold(FoldCmd),
    /// Simulated regrasping.
    #[command(subcommand)]
    Regrasp(RegraspCmd),
    /// CSV tables from pipeline run directories.
    Eval(EvalArgs),
    /// Runs every stage from one config file.
    Pipeline(PipelineArgs),
}

#[derive(Subcommand)]
enum DbCmd {
    /// Hangs every garment from every anchor and stores the drapes.
    Build {
        /// Directory of `<id>.obj` meshes with `<id>.anchors.json` sidecars.
        #[arg(long)]
        garments: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Database settings (JSON); defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Prints the entries of a database.
    List {
        #[arg(long)]
        db: PathBuf,
    },
}

#[derive(Subcommand)]
enum FeatureCmd {
    /// Computes the feature of a draped mesh.
    Extract {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Database settings supplying feature and grid parameters.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Ranks database entries against a feature or mesh.
    Match {
        #[arg(long)]
        db: PathBuf,
        #[arg(long, conflicts_with = "mesh", required_unless_present = "mesh")]
        feature: Option<PathBuf>,
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
}

#[derive(Subcommand)]
enum MetricCmd {
    /// Learns bit weights from a database and labeled calibration features.
    Learn {
        #[arg(long)]
        db: PathBuf,
        /// Directory with `items.json` listing labeled feature files.
        #[arg(long)]
        calib: PathBuf,
        #[arg(long = "C", default_value_t = 10.0)]
        c: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Deformation parameters (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Distance-field samples along the target's longest axis.
    #[arg(long, default_value_t = 64)]
    nodes: usize,
}

#[derive(Subcommand)]
enum SimCmd {
    /// Hangs a garment from one vertex or anchor until quasi-static.
    Hang {
        #[arg(long)]
        mesh: PathBuf,
        /// Anchor label or vertex index.
        #[arg(long)]
        pin: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Drives gripper trajectories over a table and lets the garment settle.
    Fold {
        #[arg(long)]
        mesh: PathBuf,
        /// JSON list of `{vertex, curve, duration}`.
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fold simulation settings (JSON).
        #[arg(long)]
        sim: Option<PathBuf>,
    },
    /// Fits stiffness to a hang shear fraction or friction to a slide angle.
    Calibrate {
        #[arg(long)]
        mesh: PathBuf,
        /// Anchor label or vertex used for the shear hang.
        #[arg(long, required_unless_present = "friction_angle")]
        pin: Option<String>,
        #[arg(long, conflicts_with = "friction_angle", requires = "pin")]
        shear_target: Option<f64>,
        /// Target slide-onset tilt in degrees.
        #[arg(long)]
        friction_angle: Option<f64>,
        #[arg(long)]
        params: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum FoldCmd {
    /// Optimizes a single-arm fold trajectory.
    Optimize {
        /// Fold configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        garment: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-simulates the curves stored in a trajectory file.
    Replay {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        garment: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum RegraspCmd {
    /// Runs the hang, recognize, register and regrasp loop.
    Run {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        garment: PathBuf,
        /// Regrasp configuration (JSON).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EvalArgs {
    /// Pipeline output directories.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

fn read_or_default<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    path.as_deref().map_or_else(|| Ok(T::default()), read_json)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Validation(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

/// Mesh plus its `<stem>.anchors.json` sidecar when present.
fn load_garment_mesh(path: &Path) -> Result<TriMesh> {
    let mesh = load_obj(path)?;
    let sidecar = path.with_extension("anchors.json");
    if sidecar.is_file() {
        mesh.with_anchors(load_anchors(sidecar)?)
    } else {
        Ok(mesh)
    }
}

fn resolve_pin(mesh: &TriMesh, pin: &str) -> Result<usize> {
    match pin.parse::<usize>() {
        Ok(v) if v < mesh.vertex_count() => Ok(v),
        Ok(v) => Err(Error::Validation(format!("vertex {v} out of range"))),
        Err(_) => mesh.anchor(pin).ok_or_else(|| Error::Validation(format!("mesh has no anchor {pin}"))),
    }
}

fn stem(path: &Path) -> Result<String> {
    path.file_stem().and_then(|s| s.to_str()).map(str::to_string).ok_or_else(|| Error::Validation(format!("bad file name {}", path.display())))
}

fn garments_in(dir: &Path) -> Result<Vec<GarmentModel>> {
    let listing = std::fs::read_dir(dir).map_err(|e| Error::Validation(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = listing.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "obj")).collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Validation(format!("no .obj garments in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let id = stem(p)?;
            let prefix = id.split(['_', '-']).next().unwrap_or(&id);
            let category = Category::parse(prefix).ok_or_else(|| Error::Validation(format!("cannot infer a category from garment id {id}")))?;
            Ok(GarmentModel { id, category, mesh: load_garment_mesh(p)? })
        })
        .collect()
}

fn weights_or_ones(path: &Option<PathBuf>, db: &DbSettings) -> Result<WeightVector> {
    path.as_ref().map_or_else(|| Ok(WeightVector::ones(db.feature)), WeightVector::load)
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Db(DbCmd::Build { garments, out, config }) => {
            let settings: DbSettings = read_or_default(&config)?;
            let m = build_database(&garments_in(&garments)?, &settings, &out)?;
            eprintln!("wrote {} entries to {}", m.entries.len(), out.display());
        }
        Command::Db(DbCmd::List { db }) => {
            let (m, _) = load_database(&db)?;
            for e in &m.entries {
                println!("{}\t{}\t{}", e.id, e.category, e.pin_vertex);
            }
        }
        Command::Feature(FeatureCmd::Extract { mesh, out, config }) => {
            let settings: DbSettings = read_or_default(&config)?;
            let f = mesh_feature(&load_obj(&mesh)?, &settings)?;
            f.save(&out)?;
            eprintln!("{} bits, {} set", f.len(), f.count_ones());
        }
        Command::Feature(FeatureCmd::Match { db, feature, mesh, weights, top }) => {
            let (m, entries) = load_database(&db)?;
            let q = match (feature, mesh) {
                (Some(f), _) => drapekit::features::BinaryFeature::load(f)?,
                (None, Some(mesh)) => mesh_feature(&load_obj(mesh)?, &m.settings)?,
                (None, None) => return Err(Error::Validation("give --feature or --mesh".into())),
            };
            let w = weights_or_ones(&weights, &m.settings)?;
            for r in rank_entries(&q, &entries, &w)?.iter().take(top) {
                println!("{}\t{}\tshift {}", entries[r.label].id(), r.score, r.shift);
            }
        }
        Command::Metric(MetricCmd::Learn { db, calib, c, out }) => {
            let (_, entries) = load_database(&db)?;
            let db_items: Vec<_> = entries.iter().map(|e| (e.feature.clone(), e.id())).collect();
            let calib = load_calibration_set(&calib)?;
            let outcome = learn_weights(&db_items, &calib, &LearnSettings { c, ..LearnSettings::default() })?;
            outcome.weights.save(&out)?;
            print_json(&outcome.log)?;
        }
        Command::Register(a) => {
            let params: DeformationParams = read_or_default(&a.config)?;
            let source = load_obj(&a.source)?;
            let target = load_obj(&a.target)?;
            let field = build_distance_field(&target, Some(GridSpec::fit_nodes(&target, a.nodes)?))?;
            let reg = register(&source, &target, &field, &params)?;
            save_obj(&reg.nonrigid.mesh, &a.out)?;
            print_json(&serde_json::json!({
                "scale": reg.scale,
                "icp_residual": reg.icp.residual,
                "error_rigid": reg.error_rigid,
                "error_nonrigid": reg.error_nonrigid,
                "energy": reg.nonrigid.energy,
            }))?;
        }
        Command::Sim(SimCmd::Hang { mesh, pin, out, params }) => {
            let params: ClothParams = read_or_default(&params)?;
            let m = load_garment_mesh(&mesh)?;
            let (draped, report) = simulate_hang_report(&m, resolve_pin(&m, &pin)?, &params, &SettleSettings::default())?;
            save_obj(&draped, &out)?;
            print_json(&report)?;
        }
        Command::Sim(SimCmd::Fold { mesh, trajectory, out, sim }) => {
            let sim: FoldSimSettings = read_or_default(&sim)?;
            let trajectories: Vec<PinTrajectory> = read_json(&trajectory)?;
            let (folded, report) = simulate_fold(&load_obj(&mesh)?, &trajectories, &sim.params, &sim.settle)?;
            save_obj(&folded, &out)?;
            print_json(&report)?;
        }
        Command::Sim(SimCmd::Calibrate { mesh, pin, shear_target, friction_angle, params }) => {
            let params: ClothParams = read_or_default(&params)?;
            let m = load_garment_mesh(&mesh)?;
            match (shear_target, friction_angle) {
                (Some(t), _) => {
                    let pin = resolve_pin(&m, pin.as_deref().unwrap_or_default())?;
                    print_json(&calibrate_shear(&m, pin, t, &params)?)?;
                }
                (None, Some(a)) => print_json(&calibrate_friction(&m, a, &params)?)?,
                (None, None) => return Err(Error::Validation("give --shear-target or --friction-angle".into())),
            }
        }
        Command::Fold(FoldCmd::Optimize { config, garment, out }) => {
            let cfg: FoldConfig = read_json(&config)?;
            let task = cfg.task(&load_garment_mesh(&garment)?)?;
            let result = optimize_trajectory(&task)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::Validation(format!("{}: {e}", out.display())))?;
            save_obj(&task.simulate(&result.curves)?, out.join("folded.obj"))?;
            save_obj(&task.target, out.join("target.obj"))?;
            write_json(&out.join("trajectory.json"), &result)?;
            eprintln!("cost {:.4} -> {:.4} in {} simulations", result.initial.cost, result.last.cost, result.simulations);
        }
        Command::Fold(FoldCmd::Replay { config, garment, trajectory, out }) => {
            let cfg: FoldConfig = read_json(&config)?;
            let task = cfg.task(&load_garment_mesh(&garment)?)?;
            let stored: serde_json::Value = read_json(&trajectory)?;
            let curves: Vec<BezierCurve> = serde_json::from_value(stored["curves"].clone())
                .map_err(|e| Error::Validation(format!("{}: no curves: {e}", trajectory.display())))?;
            save_obj(&task.simulate(&curves)?, &out)?;
        }
        Command::Regrasp(RegraspCmd::Run { db, garment, spec, trace, weights }) => {
            let (m, entries) = load_database(&db)?;
            let id = stem(&garment)?;
            let category = entries
                .iter()
                .find(|e| e.garment_id == id)
                .map(|e| e.category)
                .ok_or_else(|| Error::Validation(format!("database has no entries for garment {id}")))?;
            let mut cfg: RegraspConfig = read_json(&spec)?;
            if let Some(seed) = seed_from_env()? {
                cfg.seed = seed;
            }
            let w = weights_or_ones(&weights, &m.settings)?;
            let outcome = regrasp_loop(&entries, &m.settings, &load_garment_mesh(&garment)?, category, &cfg, &w)?;
            write_json(&trace, &outcome)?;
            eprintln!("grasp {:?}, score {:.3} (xi {:.3}) after {} iterations", outcome.grasp, outcome.score, outcome.xi, outcome.trace.len());
            if outcome.aborted.is_some() {
                return Ok(EXIT_FAILED);
            }
        }
        Command::Eval(EvalArgs { runs, out }) => {
            let tables = eval_dirs(&runs)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::Validation(format!("{}: {e}", out.display())))?;
            for (name, body) in [("registration.csv", &tables.registration), ("retrieval.csv", &tables.retrieval), ("folds.csv", &tables.folds)] {
                let p = out.join(name);
                std::fs::write(&p, body).map_err(|e| Error::Validation(format!("{}: {e}", p.display())))?;
            }
        }
        Command::Pipeline(PipelineArgs { config }) => {
            let cfg = RunConfig::load(&config)?;
            let (code, report) = run_pipeline(&cfg);
            match &report.failed_stage {
                None => eprintln!("all stages succeeded; report in {}", cfg.out_dir.display()),
                Some(stage) => eprintln!("stage {stage} failed ({})", report.error_kind.as_deref().unwrap_or("?")),
            }
            return Ok(code);
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = log_level(&cli.verbosity).unwrap_or(log::LevelFilter::Warn);
    env_logger::Builder::new().filter_level(level).init();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILED as u8);
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error [{}]: {e}", e.kind());
            let code = match e {
                Error::Validation(_) | Error::Parse { .. } | Error::Io { .. } | Error::Json(_) => EXIT_INVALID,
                _ => EXIT_FAILED,
            };
            ExitCode::from(code as u8)
        }
    }
}
