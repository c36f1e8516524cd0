//! Hangs a desk-corpus garment from one of its anchors and writes the drape.
//!
//! `cargo run --release --example hang_garment -- [towel|shirt|pants] [ANCHOR] [OUT.obj]`

use drapekit::clothsim::{simulate_hang_report, ClothParams, SettleSettings};
use drapekit::mesh::garments::desk_corpus;
use drapekit::mesh::save_obj;

fn main() -> drapekit::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let id = args.first().map_or("towel", String::as_str);
    let garment = desk_corpus(0.05)?.into_iter().find(|g| g.id == id).expect("unknown garment id");
    let anchor = args.get(1).cloned().unwrap_or_else(|| garment.mesh.anchors().keys().next().unwrap().clone());
    let pin = *garment.mesh.anchors().get(&anchor).expect("unknown anchor");

    let (drape, report) = simulate_hang_report(&garment.mesh, pin, &ClothParams::default(), &SettleSettings::default())?;
    println!("{id} hung from {anchor} (vertex {pin})");
    println!("  converged {} after {} steps ({:.2} s simulated)", report.converged, report.steps, report.sim_time);
    println!("  hang length {:.3} m, lowest vertex {}", report.hang_length, report.lowest_vertex);
    if let Some(out) = args.get(2) {
        save_obj(&drape, out)?;
        println!("  wrote {out}");
    }
    Ok(())
}
