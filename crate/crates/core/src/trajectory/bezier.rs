use crate::error::{Error, Result};
use crate::mesh::Vec3;

/// Cubic Bézier curve.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BezierCurve {
    pub points: [Vec3; 4],
}

impl BezierCurve {
    pub fn new(points: [Vec3; 4]) -> Result<Self> {
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::Domain("control points must be finite".into()));
        }
        Ok(Self { points })
    }

    /// Straight segment with evenly spaced inner control points.
    pub fn line(a: Vec3, b: Vec3) -> Self {
        Self { points: [a, a + (b - a) / 3.0, a + 2.0 * (b - a) / 3.0, b] }
    }

    pub fn constant(p: Vec3) -> Self {
        Self { points: [p; 4] }
    }

    pub fn start(&self) -> Vec3 {
        self.points[0]
    }

    pub fn end(&self) -> Vec3 {
        self.points[3]
    }

    /// Direct Bernstein evaluation; `u` is clamped to `[0, 1]`.
    pub fn at(&self, u: f64) -> Vec3 {
        let u = u.clamp(0.0, 1.0);
        let v = 1.0 - u;
        let [p0, p1, p2, p3] = self.points;
        p0 * (v * v * v) + p1 * (3.0 * u * v * v) + p2 * (3.0 * u * u * v) + p3 * (u * u * u)
    }

    /// De Casteljau split at `u` into the two sub-curves.
    pub fn split(&self, u: f64) -> (BezierCurve, BezierCurve) {
        let [p0, p1, p2, p3] = self.points;
        let lerp = |a: Vec3, b: Vec3| a + (b - a) * u;
        let (q0, q1, q2) = (lerp(p0, p1), lerp(p1, p2), lerp(p2, p3));
        let (r0, r1) = (lerp(q0, q1), lerp(q1, q2));
        let s = lerp(r0, r1);
        (BezierCurve { points: [p0, q0, r0, s] }, BezierCurve { points: [s, r1, q2, p3] })
    }

    pub fn polygon_length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    pub fn chord(&self) -> f64 {
        (self.points[3] - self.points[0]).norm()
    }

    pub fn reversed(&self) -> BezierCurve {
        let [a, b, c, d] = self.points;
        BezierCurve { points: [d, c, b, a] }
    }

    /// Minimum height (z) over `samples + 1` evenly spaced parameters.
    pub fn min_height(&self, samples: usize) -> f64 {
        (0..=samples).map(|i| self.at(i as f64 / samples as f64).z).fold(f64::INFINITY, f64::min)
    }
}

/// `Σₖ Bₖ³(u) Pₖ` with `u` required to lie in `[0, 1]`.
pub fn bezier_eval(c: &BezierCurve, u: f64) -> Result<Vec3> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("curve parameter {u} outside [0, 1]")));
    }
    Ok(c.at(u))
}

/// Arc length by recursive De Casteljau halving until each piece's control
/// polygon exceeds its chord by less than `tol`; sums the chords.
pub fn arc_length(c: &BezierCurve, tol: f64) -> f64 {
    let tol = if tol > 0.0 { tol } else { 1e-6 };
    let mut total = 0.0;
    let mut stack = vec![(*c, 0u32)];
    while let Some((seg, depth)) = stack.pop() {
        let chord = seg.chord();
        if seg.polygon_length() - chord < tol || depth >= 40 {
            total += chord;
        } else {
            let (a, b) = seg.split(0.5);
            stack.push((b, depth + 1));
            stack.push((a, depth + 1));
        }
    }
    total
}

/// `3t² − 2t³` on `[0, 1]`.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> BezierCurve {
        BezierCurve::new([Vec3::zeros(), Vec3::new(0.0, 1.0, 0.0), Vec3::new(1.0, 1.0, 0.0), Vec3::new(1.0, 0.0, 0.0)]).unwrap()
    }

    #[test]
    fn endpoints_and_midpoint() {
        let c = example();
        assert_eq!(bezier_eval(&c, 0.0).unwrap(), c.points[0]);
        assert_eq!(bezier_eval(&c, 1.0).unwrap(), c.points[3]);
        assert!((bezier_eval(&c, 0.5).unwrap() - Vec3::new(0.5, 0.75, 0.0)).norm() < 1e-15);
        assert!(matches!(bezier_eval(&c, 1.5), Err(Error::Domain(_))));
        let k = BezierCurve::constant(Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(k.at(0.37), Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn straight_and_point_lengths() {
        let l = BezierCurve::line(Vec3::zeros(), Vec3::new(0.6, 0.8, 0.0));
        assert!((arc_length(&l, 1e-6) - 1.0).abs() < 1e-12);
        assert_eq!(arc_length(&BezierCurve::constant(Vec3::zeros()), 1e-6), 0.0);
    }

    #[test]
    fn split_agrees_with_bernstein() {
        let c = example();
        for &u in &[0.1, 0.33, 0.5, 0.9] {
            let (a, b) = c.split(u);
            assert!((a.end() - c.at(u)).norm() < 1e-12);
            assert!((b.at(0.5) - c.at(u + 0.5 * (1.0 - u))).norm() < 1e-12);
        }
    }

    #[test]
    fn smoothstep_shape() {
        assert_eq!(smoothstep(0.0), 0.0);
        assert_eq!(smoothstep(1.0), 1.0);
        assert_eq!(smoothstep(0.5), 0.5);
    }
}
