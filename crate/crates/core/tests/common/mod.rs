//! Brute-force oracles and small generators shared by the integration tests.
#![allow(dead_code)]

use drapekit::features::{BinaryFeature, FeatureParams};
use drapekit::mesh::{grid_sheet, TriMesh, Vec3};
use drapekit::trajectory::BezierCurve;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_feature(params: FeatureParams, density: f64, rng: &mut ChaCha8Rng) -> BinaryFeature {
    let bits: Vec<bool> = (0..params.bit_count()).map(|_| rng.random_bool(density)).collect();
    BinaryFeature::from_bits(params, bits).unwrap()
}

/// Rotation by `shift` sectors, one bit at a time.
pub fn naive_rotate(f: &BinaryFeature, shift: usize) -> BinaryFeature {
    let p = f.params();
    let mut out = BinaryFeature::zeros(p);
    for l in 0..p.layers {
        for r in 0..p.rings {
            for k in 0..p.sectors {
                if f.get(p.index(l, r, k)) {
                    out.set(p.index(l, r, (k + shift) % p.sectors), true);
                }
            }
        }
    }
    out
}

/// Minimum over rotations of the per-cell mismatch count, lowest shift on ties.
pub fn naive_rotation_distance(a: &BinaryFeature, b: &BinaryFeature) -> (u32, usize) {
    let p = a.params();
    let mut best = (u32::MAX, 0);
    for s in 0..p.sectors {
        let mut d = 0;
        for l in 0..p.layers {
            for r in 0..p.rings {
                for k in 0..p.sectors {
                    if a.get(p.index(l, r, k)) != b.get(p.index(l, r, (k + s) % p.sectors)) {
                        d += 1;
                    }
                }
            }
        }
        if d < best.0 {
            best = (d, s);
        }
    }
    best
}

fn closest_on_segment(p: &Vec3, a: &Vec3, b: &Vec3) -> Vec3 {
    let d = b - a;
    let t = ((p - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
    a + t * d
}

/// Plane projection when it lands inside, otherwise the nearest edge point.
fn closest_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let n = (b - a).cross(&(c - a));
    let q = p - n * ((p - a).dot(&n) / n.norm_squared());
    let inside = [(a, b), (b, c), (c, a)].iter().all(|(u, v)| (*v - *u).cross(&(q - *u)).dot(&n) >= 0.0);
    if inside {
        return q;
    }
    [closest_on_segment(p, a, b), closest_on_segment(p, b, c), closest_on_segment(p, c, a)]
        .into_iter()
        .min_by(|x, y| (x - p).norm_squared().total_cmp(&(y - p).norm_squared()))
        .unwrap()
}

pub fn brute_closest(mesh: &TriMesh, p: &Vec3) -> (Vec3, f64) {
    (0..mesh.triangle_count())
        .map(|t| {
            let [a, b, c] = mesh.corners(t);
            let q = closest_on_triangle(p, &a, &b, &c);
            (q, (q - p).norm())
        })
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap()
}

fn ray_hits(orig: &Vec3, dir: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> bool {
    let e1 = b - a;
    let e2 = c - a;
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() < 1e-14 {
        return false;
    }
    let s = orig - a;
    let u = s.dot(&h) / det;
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) / det;
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    e2.dot(&q) / det > 0.0
}

/// Inside test by crossing parity along a fixed, generic direction.
pub fn parity_inside(mesh: &TriMesh, p: &Vec3) -> bool {
    let dir = Vec3::new(0.5773, 0.6172, 0.5345).normalize();
    let hits = (0..mesh.triangle_count())
        .filter(|&t| {
            let [a, b, c] = mesh.corners(t);
            ray_hits(p, &dir, &a, &b, &c)
        })
        .count();
    hits % 2 == 1
}

pub fn polyline_length(c: &BezierCurve, samples: usize) -> f64 {
    let mut prev = c.at(0.0);
    let mut len = 0.0;
    for i in 1..=samples {
        let p = c.at(i as f64 / samples as f64);
        len += (p - prev).norm();
        prev = p;
    }
    len
}

pub fn random_cubic(rng: &mut ChaCha8Rng) -> BezierCurve {
    let mut pt = || Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(0.0..0.5));
    BezierCurve::new([pt(), pt(), pt(), pt()]).unwrap()
}

/// A `nx × ny`-cell sheet whose vertices are displaced by up to `jitter`.
pub fn jittered_sheet(nx: usize, ny: usize, jitter: f64, rng: &mut ChaCha8Rng) -> (TriMesh, Vec<Vec3>) {
    let m = grid_sheet(0.4, 0.3, nx, ny, 0.0);
    let x = m.vertices().iter().map(|v| v + Vec3::from_fn(|_, _| rng.random_range(-jitter..jitter))).collect();
    (m, x)
}

/// Largest relative mismatch between an analytic gradient and central
/// differences of `f`.
pub fn fd_mismatch(f: impl Fn(&[Vec3], Option<&mut [Vec3]>) -> f64, x: &[Vec3], h: f64) -> f64 {
    let mut g = vec![Vec3::zeros(); x.len()];
    f(x, Some(&mut g));
    let gmax = g.iter().map(|v| v.amax()).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        for a in 0..3 {
            let mut xp = x.to_vec();
            xp[i][a] += h;
            let mut xm = x.to_vec();
            xm[i][a] -= h;
            let fd = (f(&xp, None) - f(&xm, None)) / (2.0 * h);
            let scale = fd.abs().max(g[i][a].abs()).max(1e-3 * gmax).max(1e-12);
            worst = worst.max((fd - g[i][a]).abs() / scale);
        }
    }
    worst
}
