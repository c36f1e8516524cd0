//! Runs the hang, recognize, register and regrasp loop on a towel, starting
//! from the corner opposite the desired grasp.

use drapekit::garmentdb::{build_entries, DbSettings};
use drapekit::grasp::{regrasp_loop, InitialGrasp, RegraspConfig};
use drapekit::mesh::garments::{desk_corpus, Category};
use drapekit::metric::WeightVector;

fn main() -> drapekit::Result<()> {
    let towel = desk_corpus(0.05)?.remove(0);
    let settings = DbSettings::default();
    let entries = build_entries(std::slice::from_ref(&towel), &settings)?;
    let cfg = RegraspConfig::new("corner_bl", "corner_br", InitialGrasp::Label("corner_tr".into()));
    let out = regrasp_loop(&entries, &settings, &towel.mesh, Category::Towel, &cfg, &WeightVector::ones(settings.feature))?;
    for s in &out.trace {
        println!(
            "iteration {}: holding {}, matched {} ({:.0}), next {} -> vertex {}, score {:.2}",
            s.iteration, s.held_vertex, s.matched_entry, s.match_score, s.target_label, s.next_vertex, s.score
        );
    }
    println!("grasp {:?}, score {:.2}, threshold {:.2}, converged {}", out.grasp, out.score, out.xi, out.converged);
    Ok(())
}
