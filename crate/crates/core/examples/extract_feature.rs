//! Extracts the binary volumetric feature of a hanging towel and shows that
//! the matcher recovers a rotation about the vertical axis as a sector shift.

use drapekit::clothsim::{simulate_hang, ClothParams};
use drapekit::features::{extract_feature_with_iso, rotation_distance, FeatureParams};
use drapekit::mesh::garments::desk_corpus;
use drapekit::registration::RigidTransform;
use drapekit::sdf::{build_distance_field, sign_field, GridSpec};
use nalgebra::Rotation3;

fn main() -> drapekit::Result<()> {
    let towel = desk_corpus(0.05)?.remove(0).mesh;
    let drape = simulate_hang(&towel, towel.anchors()["corner_bl"], &ClothParams::default())?;
    let params = FeatureParams::default();

    let feature = |mesh| -> drapekit::Result<_> {
        let spec = GridSpec::fit_nodes(mesh, 96)?;
        let sdf = sign_field(mesh, &build_distance_field(mesh, Some(spec))?)?;
        extract_feature_with_iso(&sdf, mesh, params, spec.voxel_size())
    };
    let a = feature(&drape)?;
    println!("{} bits, {} set", a.len(), a.count_ones());

    let c = drape.vertices()[towel.anchors()["corner_bl"]];
    let r = Rotation3::from_axis_angle(&nalgebra::Vector3::z_axis(), 3.0 * std::f64::consts::TAU / params.sectors as f64).into_inner();
    let turned = RigidTransform { rotation: r, translation: c - r * c }.transform_mesh(&drape);
    let b = feature(&turned)?;
    let m = rotation_distance(&a, &b)?;
    println!("plain Hamming {}, rotation distance {} at shift {}", a.hamming(&b), m.distance, m.shift);
    Ok(())
}
