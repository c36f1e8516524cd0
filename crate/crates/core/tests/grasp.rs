mod common;

use common::rng;
use drapekit::garmentdb::{build_entries, DbSettings};
use drapekit::grasp::{
    curvature_scan, grasp_objective, regrasp_loop, AnchorPoint, AnchorPrior, GraspObjectiveSpec, InitialGrasp, PriorEntry, RegraspConfig, ScanProfile,
};
use drapekit::mesh::garments::{desk_corpus, Category};
use drapekit::mesh::Vec3;
use drapekit::metric::WeightVector;
use proptest::prelude::*;
use rand::Rng;

fn bump(center: f64, width: f64, height: f64) -> impl Fn(usize) -> f64 {
    move |i| height * (-((i as f64 - center).powi(2)) / (2.0 * width * width)).exp()
}

fn profile(n: usize, f: impl Fn(usize) -> f64) -> ScanProfile {
    ScanProfile { samples: (0..n).map(f).collect(), spacing: 0.005 }
}

proptest! {
    #[test]
    fn scan_finds_an_isolated_bump(center in 30usize..170, width in 2.0f64..6.0, height in 0.01f64..0.2, base in 0.2f64..1.5) {
        let b = bump(center as f64, width, height);
        let p = profile(200, |i| base + b(i));
        let r = curvature_scan(&p, width).unwrap();
        prop_assert!((r.best as i64 - center as i64).abs() <= 1, "best {} center {}", r.best, center);
    }

    #[test]
    fn scan_ignores_offset_and_positive_scale(seed in any::<u64>(), offset in -2.0f64..2.0, scale in 0.1f64..10.0, sigma in 1.0f64..5.0) {
        let mut r = rng(seed);
        let raw: Vec<f64> = (0..120).map(|_| r.random_range(0.0..0.1)).collect();
        let a = curvature_scan(&ScanProfile { samples: raw.clone(), spacing: 0.01 }, sigma).unwrap();
        let b = curvature_scan(&ScanProfile { samples: raw.iter().map(|v| scale * v + offset).collect(), spacing: 0.01 }, sigma).unwrap();
        prop_assert_eq!(a.best, b.best);
    }

    #[test]
    fn prior_shift_keeps_the_best_pair(seed in any::<u64>(), weight in 0.0f64..1.0) {
        let mut r = rng(seed);
        let anchors: Vec<AnchorPoint> = ["a", "b", "c"]
            .iter()
            .map(|l| AnchorPoint { label: l.to_string(), position: Vec3::from_fn(|_, _| r.random_range(-0.3..0.3)) })
            .collect();
        let spec = GraspObjectiveSpec {
            desired_left: anchors[0].position,
            desired_right: anchors[1].position,
            sigma_left: 200.0,
            sigma_right: 200.0,
            prior: AnchorPrior::uniform(),
            xi: 0.0,
        };
        let mut skewed = Vec::new();
        for l in &anchors {
            for rr in &anchors {
                skewed.push(PriorEntry { left: l.label.clone(), right: rr.label.clone(), p: 0.0 });
            }
        }
        let k = skewed.len() as f64;
        for (i, e) in skewed.iter_mut().enumerate() {
            e.p = (1.0 - weight) / k + if i == 4 { weight } else { 0.0 };
        }
        let shifted = GraspObjectiveSpec { prior: AnchorPrior(skewed), ..spec.clone() };
        let candidates: Vec<(Vec3, Vec3)> =
            (0..12).map(|_| (Vec3::from_fn(|_, _| r.random_range(-0.3..0.3)), Vec3::from_fn(|_, _| r.random_range(-0.3..0.3)))).collect();
        let argmax = |s: &GraspObjectiveSpec| {
            candidates
                .iter()
                .enumerate()
                .map(|(i, (x, y))| (i, grasp_objective(s, x, y, &anchors).unwrap().ln_f))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0
        };
        prop_assert_eq!(argmax(&spec), argmax(&shifted));
    }
}

#[test]
fn kernel_width_selects_the_matching_bump() {
    let narrow = bump(60.0, 2.0, 0.05);
    let wide = bump(170.0, 12.0, 0.05);
    let p = profile(240, |i| 1.0 + narrow(i) + wide(i));
    assert!((curvature_scan(&p, 2.0).unwrap().best as i64 - 60).abs() <= 1);
    assert!((curvature_scan(&p, 12.0).unwrap().best as i64 - 170).abs() <= 2);
}

#[test]
fn regrasp_from_the_left_anchor_finishes_at_once() {
    let towel = desk_corpus(0.05).unwrap().remove(0);
    let settings = DbSettings::default();
    let entries = build_entries(std::slice::from_ref(&towel), &settings).unwrap();
    let w = WeightVector::ones(settings.feature);
    let cfg = RegraspConfig::new("corner_bl", "corner_br", InitialGrasp::Label("corner_bl".into()));
    let out = regrasp_loop(&entries, &settings, &towel.mesh, Category::Towel, &cfg, &w).unwrap();
    assert!(out.aborted.is_none());
    assert_eq!(out.trace.len(), 1);
    assert!(out.converged && out.score >= out.xi);
    assert_eq!(out.grasp, (towel.mesh.anchors()["corner_bl"], towel.mesh.anchors()["corner_br"]));
    for (i, s) in out.trace.iter().enumerate() {
        assert_eq!(s.iteration, i + 1);
        assert!(s.category_mismatches.is_empty());
    }
}
