//! Registers the drape of one towel onto the drape of a narrower one,
//! first rigidly and then with the shell deformation model.

use drapekit::clothsim::{simulate_hang, ClothParams};
use drapekit::mesh::garments::towel_contour;
use drapekit::mesh::mesh_from_contour;
use drapekit::registration::{register, DeformationParams};
use drapekit::sdf::{build_distance_field, GridSpec};

fn main() -> drapekit::Result<()> {
    let hang = |w, h| -> drapekit::Result<_> {
        let m = mesh_from_contour(&towel_contour(w, h)?, 0.05)?;
        simulate_hang(&m, m.anchors()["corner_bl"], &ClothParams::default())
    };
    let source = hang(0.4, 0.3)?;
    let target = hang(0.32, 0.3)?;
    let field = build_distance_field(&target, Some(GridSpec::fit_nodes(&target, 64)?))?;
    let reg = register(&source, &target, &field, &DeformationParams::default())?;
    println!("scale {:.3}, ICP rotation {:.2} deg", reg.scale, reg.icp.transform.angle().to_degrees());
    println!("mean surface error: rigid {:.5} m, rigid+nonrigid {:.5} m", reg.error_rigid, reg.error_nonrigid);
    Ok(())
}
