//! Builds a signed distance field around a sphere and probes it.

use drapekit::mesh::{icosphere, Vec3};
use drapekit::sdf::{build_distance_field, sign_field, GridSpec};

fn main() -> drapekit::Result<()> {
    let sphere = icosphere(&Vec3::zeros(), 0.2, 3);
    let sdf = sign_field(&sphere, &build_distance_field(&sphere, Some(GridSpec::fit_nodes(&sphere, 64)?))?)?;
    let spec = *sdf.spec();
    println!("grid {:?}, voxel {:.4} m", spec.dims, spec.voxel_size());
    for r in [0.0, 0.1, 0.15, 0.19, 0.21] {
        let idx = spec.nearest_node(&Vec3::new(r, 0.0, 0.0)).unwrap();
        let [i, j, k] = spec.coords(idx);
        let p = spec.node_position(i, j, k);
        println!("node at {:.3}: signed distance {:+.4} (analytic {:+.4})", p.norm(), sdf.value_at(idx), p.norm() - 0.2);
    }
    Ok(())
}
