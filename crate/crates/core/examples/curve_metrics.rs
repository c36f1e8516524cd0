//! Arc length of a cubic Bezier and the dissimilarity between a sheet and
//! its translated copy.

use drapekit::mesh::{grid_sheet, Vec3};
use drapekit::trajectory::{arc_length, dissimilarity, BezierCurve};

fn main() -> drapekit::Result<()> {
    let curve = BezierCurve::new([Vec3::zeros(), Vec3::new(0.1, 0.0, 0.2), Vec3::new(0.3, 0.0, 0.2), Vec3::new(0.4, 0.0, 0.0)])?;
    let chord = (curve.points[3] - curve.points[0]).norm();
    println!("arc length {:.6} m (chord {chord:.3} m)", arc_length(&curve, 1e-9));

    let sheet = grid_sheet(0.4, 0.3, 8, 6, 0.0);
    let shift = Vec3::new(0.0, 0.0, 0.05);
    println!("dissimilarity after a 5 cm lift: {:.6} m", dissimilarity(&sheet, &sheet.translated(&shift))?);
    Ok(())
}
