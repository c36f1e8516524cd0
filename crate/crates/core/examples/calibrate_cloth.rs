//! Fits membrane stiffness to a target shear fraction and friction to a
//! target slide-onset angle.

use drapekit::clothsim::{calibrate_friction, calibrate_shear, ClothParams};
use drapekit::mesh::garments::towel_contour;
use drapekit::mesh::{grid_sheet, mesh_from_contour};

fn main() -> drapekit::Result<()> {
    let towel = mesh_from_contour(&towel_contour(0.4, 0.3)?, 0.05)?;
    let shear = calibrate_shear(&towel, towel.anchors()["corner_bl"], 0.024, &ClothParams::default())?;
    println!(
        "shear target {:.3}: stiffness {:.1} gives {:.4} after {} hangs",
        shear.target,
        shear.stretch_stiffness,
        shear.achieved,
        shear.evaluations.len()
    );

    let patch = grid_sheet(0.2, 0.2, 6, 6, 0.0);
    let friction = calibrate_friction(&patch, 22.2, &ClothParams::default().with_membrane(2000.0))?;
    println!("slide onset target 22.2 deg: friction {:.3} slides at {:.2} deg", friction.friction, friction.onset_angle_deg);
    Ok(())
}
