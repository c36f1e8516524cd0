//! Writes the built-in garments as OBJ meshes with anchor sidecars.
//!
//! `cargo run --release --example export_fixtures -- [OUT_DIR] [EDGE_LEN]`

use std::path::PathBuf;

use drapekit::mesh::garments::{desk_corpus, DESK_EDGE_LENGTH};
use drapekit::mesh::{save_anchors, save_obj};

fn main() -> drapekit::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "fixtures/garments".into()));
    let edge = args.next().map_or(DESK_EDGE_LENGTH, |s| s.parse().expect("edge length"));
    std::fs::create_dir_all(&out).map_err(|e| drapekit::Error::io(&out, e))?;
    for g in desk_corpus(edge)? {
        save_obj(&g.mesh, out.join(format!("{}.obj", g.id)))?;
        save_anchors(&g.mesh, out.join(format!("{}.anchors.json", g.id)))?;
        println!("{:<6} {:>4} vertices {:>2} anchors", g.id, g.mesh.vertex_count(), g.mesh.anchors().len());
    }
    Ok(())
}
