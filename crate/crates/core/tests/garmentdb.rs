use drapekit::garmentdb::{build_entries, load_database, mesh_feature, perturb_query, rank_entries, save_database, DbSettings, NoiseSpec};
use drapekit::mesh::garments::{desk_corpus, Category};
use drapekit::metric::WeightVector;

/// Labels that coincide under the garment's mirror symmetries.
fn symmetry_class(category: Category, label: &str) -> String {
    if category == Category::Towel {
        return "corner".into();
    }
    label.trim_end_matches("_left").trim_end_matches("_right").to_string()
}

#[test]
fn noisy_drapes_retrieve_their_garment_and_grasp_class() {
    let corpus: Vec<_> = desk_corpus(0.07).unwrap().into_iter().filter(|g| g.category != Category::Shirt).collect();
    let settings = DbSettings::default();
    let entries = build_entries(&corpus, &settings).unwrap();
    assert_eq!(entries.len(), 4 + 12);

    let dir = tempfile::tempdir().unwrap();
    save_database(&entries, &settings, dir.path()).unwrap();
    let (manifest, loaded) = load_database(dir.path()).unwrap();
    assert_eq!(manifest.settings_hash, settings.hash());
    assert_eq!(loaded.len(), entries.len());
    for (a, b) in entries.iter().zip(&loaded) {
        assert_eq!(a.feature, b.feature);
        assert_eq!(a.draped_mesh.vertices(), b.draped_mesh.vertices());
    }

    let w = WeightVector::ones(settings.feature);
    let noise = NoiseSpec { jitter: 0.002, smoothing: 0, crop: 0.0 };
    let mut exact = 0;
    for (i, e) in loaded.iter().enumerate() {
        let q = mesh_feature(&perturb_query(e, &noise, 40 + i as u64).unwrap(), &settings).unwrap();
        let top = &loaded[rank_entries(&q, &loaded, &w).unwrap()[0].label];
        assert_eq!(top.garment_id, e.garment_id, "{} retrieved {}", e.id(), top.id());
        assert_eq!(symmetry_class(e.category, &top.grasp_label), symmetry_class(e.category, &e.grasp_label), "{} retrieved {}", e.id(), top.id());
        exact += (top.id() == e.id()) as usize;
    }
    println!("exact label matches: {exact}/{}", loaded.len());
}
