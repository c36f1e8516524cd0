use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use drapekit::features::BinaryFeature;
use drapekit::mesh::load_obj;
use drapekit::pipeline::{PipelineReport, RegistrationRow, RetrievalRow, REPORT_FILE};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn drapekit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drapekit")).args(args).env_remove("DRAPEKIT_SEED").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn feature_extract_writes_a_4096_bit_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("towel.bin");
    let o = drapekit(&["feature", "extract", "--mesh", s(&fixtures().join("garments/towel.obj")), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(BinaryFeature::load(&out).unwrap().len(), 4096);
}

#[test]
fn hang_by_label_keeps_connectivity() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("hung.obj");
    let mesh = fixtures().join("garments/towel.obj");
    let o = drapekit(&["sim", "hang", "--mesh", s(&mesh), "--pin", "corner_tl", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["converged"], true);
    assert!(load_obj(&out).unwrap().has_same_connectivity(&load_obj(&mesh).unwrap()));
}

#[test]
fn unknown_pin_label_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = drapekit(&["sim", "hang", "--mesh", s(&fixtures().join("garments/towel.obj")), "--pin", "sleeve", "--out", s(&dir.path().join("x.obj"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_database_is_a_usage_error() {
    let o = drapekit(&["db", "list", "--db", "/nonexistent/db"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_pipeline_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fixtures().join("towel_run.json")).unwrap()).unwrap();
    let out = dir.path().join("run");
    cfg["out_dir"] = s(&out).into();
    cfg["garment"]["mesh"] = s(&fixtures().join("garments/towel.obj")).into();
    cfg["fold"]["grasp_label"] = "no_such_anchor".into();
    let path = dir.path().join("run.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let o = drapekit(&["pipeline", "--config", s(&path)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    cfg["fold"]["grasp_label"] = "corner_bl".into();
    cfg["surprise"] = 1.into();
    std::fs::write(&path, cfg.to_string()).unwrap();
    assert_eq!(drapekit(&["pipeline", "--config", s(&path)]).status.code(), Some(2));
}

#[test]
fn eval_aggregates_run_directories() {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for (k, correct) in [true, false].into_iter().enumerate() {
        let run = dir.path().join(format!("run{k}"));
        std::fs::create_dir_all(&run).unwrap();
        let report = PipelineReport {
            garment: "towel".into(),
            success: true,
            retrieval: vec![RetrievalRow {
                category: drapekit::mesh::garments::Category::Towel,
                query: "towel/corner_bl".into(),
                predicted: "towel/corner_bl".into(),
                score: 0.0,
                correct,
            }],
            registration: vec![RegistrationRow {
                source: "a".into(),
                target: "b".into(),
                s_to_t_r: 0.02,
                t_to_s_r: 0.03,
                s_to_t_rn: 0.01,
                t_to_s_rn: 0.015,
            }],
            ..Default::default()
        };
        std::fs::write(run.join(REPORT_FILE), serde_json::to_string(&report).unwrap()).unwrap();
        runs.push(run);
    }
    let out = dir.path().join("tables");
    let o = drapekit(&["eval", s(&runs[0]), s(&runs[1]), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let retrieval = std::fs::read_to_string(out.join("retrieval.csv")).unwrap();
    assert!(retrieval.lines().any(|l| l.starts_with("towel,2,1,0.5")), "{retrieval}");
    assert!(out.join("registration.csv").is_file() && out.join("folds.csv").is_file());
}
