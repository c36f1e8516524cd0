//! Builds a small garment database on disk and queries it with a noisy drape.
//!
//! `cargo run --release --example build_database -- [OUT_DIR]`

use drapekit::garmentdb::{build_database, load_database, perturb_query, rank_entries, DbSettings, NoiseSpec};
use drapekit::garmentdb::mesh_feature;
use drapekit::mesh::garments::desk_corpus;
use drapekit::metric::WeightVector;

fn main() -> drapekit::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/example-db".into());
    let garments: Vec<_> = desk_corpus(0.07)?.into_iter().filter(|g| g.id != "shirt").collect();
    let settings = DbSettings::default();
    let manifest = build_database(&garments, &settings, &out)?;
    println!("wrote {} entries to {out}", manifest.entries.len());

    let (_, entries) = load_database(&out)?;
    let w = WeightVector::ones(settings.feature);
    let noise = NoiseSpec { jitter: 0.003, smoothing: 0, crop: 0.0 };
    for (i, entry) in entries.iter().enumerate().step_by(3) {
        let query = mesh_feature(&perturb_query(entry, &noise, i as u64)?, &settings)?;
        let best = &rank_entries(&query, &entries, &w)?[0];
        println!("{:<20} -> {:<20} score {:.1}", entry.id(), entries[best.index].id(), best.score);
    }
    Ok(())
}
