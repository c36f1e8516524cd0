//! Runs the full pipeline from a JSON run config and prints the stage table.
//!
//! `cargo run --release --example run_pipeline -- [CONFIG]`

use drapekit::pipeline::{run_pipeline, RunConfig};

fn main() -> drapekit::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/towel_run.json").into());
    let cfg = RunConfig::load(&path)?;
    let (code, report) = run_pipeline(&cfg);
    for s in &report.stages {
        println!("{:<14} {:?} {:.1} s", s.name, s.status, s.seconds);
    }
    println!("exit code {code}, artifacts in {}", cfg.out_dir.display());
    std::process::exit(code);
}
