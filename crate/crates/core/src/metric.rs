//! Weighted-Hamming retrieval and large-margin weight learning.
//!
//! A database item is first aligned to the query by the sector shift that
//! minimizes plain Hamming distance, then scored by summing `w` over the bits
//! where the aligned item and the query disagree.
//!
//! Learning solves a ranking SVM with one slack per calibration item:
//!
//! ```text
//! min ½‖w‖² + C Σⱼ ξⱼ   s.t.  wᵀd_kj − wᵀd_ij ≥ 1 − ξⱼ,  ξⱼ ≥ 0
//! ```
//!
//! for every same-label database item `i` and different-label item `k`, where
//! `d_ij` is the mismatch vector between aligned item `i` and query `j`. The
//! cutting-plane loop adds the most violated pair per calibration item and
//! re-solves the restricted problem by dual coordinate ascent.

use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{rotation_distance, BinaryFeature, FeatureParams};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WeightVector {
    pub params: FeatureParams,
    pub w: Vec<f64>,
}

impl WeightVector {
    pub fn ones(params: FeatureParams) -> Self {
        Self { params, w: vec![1.0; params.bit_count()] }
    }

    pub fn new(params: FeatureParams, w: Vec<f64>) -> Result<Self> {
        let v = Self { params, w };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.w.len() != self.params.bit_count() {
            return Err(Error::Domain(format!("weight length {} != {}", self.w.len(), self.params.bit_count())));
        }
        if self.w.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("non-finite weight".into()));
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.w.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { params: self.params, w: self.w.iter().map(|x| x * s).collect() }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let v: Self = serde_json::from_str(&text)?;
        v.validate()?;
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Match<L> {
    pub index: usize,
    pub label: L,
    pub score: f64,
    /// Sector shift applied to the database item.
    pub shift: usize,
}

/// Sum of `w` over the bits where `a` and `b` differ.
pub fn weighted_mismatch(a: &BinaryFeature, b: &BinaryFeature, w: &WeightVector) -> f64 {
    a.mismatches(b).map(|i| w.w[i]).sum()
}

/// Rotates `item` by the shift that best aligns it with `query`.
pub fn align_to(item: &BinaryFeature, query: &BinaryFeature) -> Result<(BinaryFeature, usize)> {
    let m = rotation_distance(item, query)?;
    Ok((item.rotate_sectors(m.shift), m.shift))
}

pub fn best_match<L: Clone>(q: &BinaryFeature, db: &[(BinaryFeature, L)], w: &WeightVector) -> Result<Match<L>> {
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    if w.params != q.params() {
        return Err(Error::Domain("weight params differ from query params".into()));
    }
    let mut best: Option<Match<L>> = None;
    for (index, (feat, label)) in db.iter().enumerate() {
        let (aligned, shift) = align_to(feat, q)?;
        let score = weighted_mismatch(&aligned, q, w);
        if best.as_ref().is_none_or(|b| score < b.score) {
            best = Some(Match { index, label: label.clone(), score, shift });
        }
    }
    Ok(best.expect("non-empty database"))
}

/// Database items sorted by ascending score (stable, so ties keep index order).
pub fn ranked_matches<L: Clone>(q: &BinaryFeature, db: &[(BinaryFeature, L)], w: &WeightVector) -> Result<Vec<Match<L>>> {
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let mut out = Vec::with_capacity(db.len());
    for (index, (feat, label)) in db.iter().enumerate() {
        let (aligned, shift) = align_to(feat, q)?;
        out.push(Match { index, label: label.clone(), score: weighted_mismatch(&aligned, q, w), shift });
    }
    out.sort_by(|a, b| a.score.total_cmp(&b.score));
    Ok(out)
}

pub fn classification_accuracy<L: PartialEq>(predictions: &[L], ground_truth: &[L]) -> Result<f64> {
    if predictions.len() != ground_truth.len() {
        return Err(Error::Domain(format!("{} predictions vs {} labels", predictions.len(), ground_truth.len())));
    }
    if predictions.is_empty() {
        return Err(Error::Domain("accuracy of an empty set".into()));
    }
    let hits = predictions.iter().zip(ground_truth).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Nearest-neighbour accuracy of `queries` against `db` under `w`.
pub fn nn_accuracy<L: Clone + PartialEq>(queries: &[(BinaryFeature, L)], db: &[(BinaryFeature, L)], w: &WeightVector) -> Result<f64> {
    let mut pred = Vec::with_capacity(queries.len());
    let mut truth = Vec::with_capacity(queries.len());
    for (q, l) in queries {
        pred.push(best_match(q, db, w)?.label);
        truth.push(l.clone());
    }
    classification_accuracy(&pred, &truth)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnSettings {
    pub c: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Coordinate-ascent sweeps over the working set per outer iteration.
    pub inner_sweeps: usize,
}

impl Default for LearnSettings {
    fn default() -> Self {
        Self { c: 10.0, max_iterations: 200, tolerance: 1e-4, inner_sweeps: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LearnIteration {
    pub iteration: usize,
    pub objective: f64,
    pub max_violation: f64,
    pub constraints: usize,
}

#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub weights: WeightVector,
    pub objective: f64,
    pub log: Vec<LearnIteration>,
}

/// Constraint vector `a = d_k − d_i` stored as its +1 and −1 bit sets.
#[derive(Debug, Clone)]
struct Cut {
    item: usize,
    pos: Vec<u64>,
    neg: Vec<u64>,
    sq_norm: f64,
}

impl Cut {
    fn dot(&self, w: &[f64]) -> f64 {
        let mut s = 0.0;
        for (words, sign) in [(&self.pos, 1.0), (&self.neg, -1.0)] {
            for (wi, &word) in words.iter().enumerate() {
                let mut x = word;
                while x != 0 {
                    s += sign * w[wi * 64 + x.trailing_zeros() as usize];
                    x &= x - 1;
                }
            }
        }
        s
    }

    fn axpy(&self, alpha: f64, w: &mut [f64]) {
        for (words, sign) in [(&self.pos, alpha), (&self.neg, -alpha)] {
            for (wi, &word) in words.iter().enumerate() {
                let mut x = word;
                while x != 0 {
                    w[wi * 64 + x.trailing_zeros() as usize] += sign;
                    x &= x - 1;
                }
            }
        }
    }
}

fn mismatch_words(a: &BinaryFeature, b: &BinaryFeature) -> Vec<u64> {
    a.words().iter().zip(b.words()).map(|(x, y)| x ^ y).collect()
}

fn dot_words(words: &[u64], w: &[f64]) -> f64 {
    let mut s = 0.0;
    for (wi, &word) in words.iter().enumerate() {
        let mut x = word;
        while x != 0 {
            s += w[wi * 64 + x.trailing_zeros() as usize];
            x &= x - 1;
        }
    }
    s
}

/// Learns bit weights from database features and calibration items.
pub fn learn_weights<L: Clone + PartialEq + std::fmt::Debug>(
    db: &[(BinaryFeature, L)],
    calib: &[(BinaryFeature, L)],
    settings: &LearnSettings,
) -> Result<LearnOutcome> {
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    if !(settings.c > 0.0) {
        return Err(Error::Domain(format!("penalty C must be positive, got {}", settings.c)));
    }
    if calib.is_empty() {
        return Err(Error::Domain("empty calibration set".into()));
    }
    let params = db[0].0.params();
    for (f, l) in calib {
        if f.params() != params {
            return Err(Error::Domain("calibration feature params differ from database".into()));
        }
        if !db.iter().any(|(_, dl)| dl == l) {
            return Err(Error::LabelMismatch(format!("calibration label {l:?} absent from database")));
        }
    }
    let dim = params.bit_count();

    // Mismatch vectors d_ij, alignment by plain Hamming.
    let mut d: Vec<Vec<Vec<u64>>> = Vec::with_capacity(calib.len());
    for (q, _) in calib {
        let mut row = Vec::with_capacity(db.len());
        for (x, _) in db {
            let (aligned, _) = align_to(x, q)?;
            row.push(mismatch_words(&aligned, q));
        }
        d.push(row);
    }
    let same: Vec<Vec<usize>> = calib.iter().map(|(_, l)| (0..db.len()).filter(|&i| db[i].1 == *l).collect()).collect();
    let diff: Vec<Vec<usize>> = calib.iter().map(|(_, l)| (0..db.len()).filter(|&i| db[i].1 != *l).collect()).collect();

    let c = settings.c;
    let mut w = vec![0.0; dim];
    let mut cuts: Vec<Cut> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut alpha_sum = vec![0.0; calib.len()];
    let mut seen = std::collections::HashSet::new();
    let mut best_w = w.clone();
    let mut best_obj = f64::INFINITY;
    let mut log = Vec::new();

    for iteration in 0..settings.max_iterations {
        // Full-problem slack and most violated pair for each calibration item.
        let mut primal = 0.5 * w.iter().map(|x| x * x).sum::<f64>();
        let mut max_violation: f64 = 0.0;
        let mut new_cuts = Vec::new();
        for j in 0..calib.len() {
            if diff[j].is_empty() {
                continue;
            }
            let worst_i = same[j].iter().copied().max_by(|&a, &b| dot_words(&d[j][a], &w).total_cmp(&dot_words(&d[j][b], &w)).then(b.cmp(&a)));
            let worst_k = diff[j].iter().copied().min_by(|&a, &b| dot_words(&d[j][a], &w).total_cmp(&dot_words(&d[j][b], &w)));
            let (Some(i), Some(k)) = (worst_i, worst_k) else { continue };
            let loss = (1.0 + dot_words(&d[j][i], &w) - dot_words(&d[j][k], &w)).max(0.0);
            primal += c * loss;
            // Slack already granted by the restricted problem.
            let xi = cuts
                .iter()
                .filter(|cut| cut.item == j)
                .map(|cut| (1.0 - cut.dot(&w)).max(0.0))
                .fold(0.0, f64::max);
            let violation = loss - xi;
            max_violation = max_violation.max(violation);
            if violation > settings.tolerance && seen.insert((j, i, k)) {
                let pos: Vec<u64> = d[j][k].iter().zip(&d[j][i]).map(|(a, b)| a & !b).collect();
                let neg: Vec<u64> = d[j][i].iter().zip(&d[j][k]).map(|(a, b)| a & !b).collect();
                let sq = (pos.iter().chain(&neg).map(|x| x.count_ones()).sum::<u32>()) as f64;
                if sq > 0.0 {
                    new_cuts.push(Cut { item: j, pos, neg, sq_norm: sq });
                }
            }
        }
        if primal < best_obj {
            best_obj = primal;
            best_w.clone_from(&w);
        }
        log.push(LearnIteration { iteration, objective: best_obj, max_violation, constraints: cuts.len() });
        log::debug!("cutting plane {iteration}: objective {best_obj:.6} violation {max_violation:.3e}");
        if max_violation < settings.tolerance || new_cuts.is_empty() {
            break;
        }
        for cut in new_cuts {
            cuts.push(cut);
            alpha.push(0.0);
        }
        // Dual coordinate ascent on the restricted problem; w = Σ α a.
        for _ in 0..settings.inner_sweeps {
            let mut change: f64 = 0.0;
            for (ci, cut) in cuts.iter().enumerate() {
                let g = 1.0 - cut.dot(&w);
                let room = c - (alpha_sum[cut.item] - alpha[ci]);
                let new = (alpha[ci] + g / cut.sq_norm).clamp(0.0, room.max(0.0));
                let delta = new - alpha[ci];
                if delta != 0.0 {
                    cut.axpy(delta, &mut w);
                    alpha[ci] = new;
                    alpha_sum[cut.item] += delta;
                    change = change.max(delta.abs() * cut.sq_norm.sqrt());
                }
            }
            if change < 1e-9 {
                break;
            }
        }
    }
    let weights = WeightVector::new(params, best_w)?;
    Ok(LearnOutcome { weights, objective: best_obj, log })
}

/// Seeded synthetic corpus with a simulated-versus-reconstructed domain shift.
///
/// Class prototypes share a random base and differ by sparse flips that are
/// denser inside a fixed 25% bit mask. Database items are the prototypes;
/// calibration and test items add per-item noise and invert every masked bit,
/// so the masked region ranks classes backwards under plain Hamming distance.
#[derive(Debug, Clone)]
pub struct DomainShiftCorpus {
    pub mask: Vec<bool>,
    pub db: Vec<(BinaryFeature, usize)>,
    pub calib: Vec<(BinaryFeature, usize)>,
    pub test: Vec<(BinaryFeature, usize)>,
}

#[derive(Debug, Clone, Copy)]
pub struct DomainShiftSpec {
    pub params: FeatureParams,
    pub classes: usize,
    pub calib_per_class: usize,
    pub test_per_class: usize,
    pub mask_fraction: f64,
    pub masked_class_flip: f64,
    pub clean_class_flip: f64,
    pub item_noise: f64,
}

impl Default for DomainShiftSpec {
    fn default() -> Self {
        Self {
            params: FeatureParams::default(),
            classes: 12,
            calib_per_class: 3,
            test_per_class: 5,
            mask_fraction: 0.25,
            masked_class_flip: 0.03,
            clean_class_flip: 0.012,
            item_noise: 0.04,
        }
    }
}

impl DomainShiftCorpus {
    pub fn generate(spec: &DomainShiftSpec, seed: u64) -> Result<Self> {
        use rand::seq::SliceRandom;
        use rand::{Rng, SeedableRng};
        spec.params.validate()?;
        let n = spec.params.bit_count();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut mask = vec![false; n];
        for &i in &order[..(spec.mask_fraction * n as f64).round() as usize] {
            mask[i] = true;
        }
        let base: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let protos: Vec<Vec<bool>> = (0..spec.classes)
            .map(|_| {
                base.iter()
                    .zip(&mask)
                    .map(|(&b, &m)| b ^ rng.random_bool(if m { spec.masked_class_flip } else { spec.clean_class_flip }))
                    .collect()
            })
            .collect();
        let shifted = |proto: &[bool], rng: &mut rand_chacha::ChaCha8Rng| -> Result<BinaryFeature> {
            let bits: Vec<bool> = proto.iter().zip(&mask).map(|(&b, &m)| b ^ m ^ rng.random_bool(spec.item_noise)).collect();
            BinaryFeature::from_bits(spec.params, bits)
        };
        let mut db = Vec::new();
        let mut calib = Vec::new();
        let mut test = Vec::new();
        for (c, proto) in protos.iter().enumerate() {
            db.push((BinaryFeature::from_bits(spec.params, proto.iter().copied())?, c));
            for _ in 0..spec.calib_per_class {
                calib.push((shifted(proto, &mut rng)?, c));
            }
            for _ in 0..spec.test_per_class {
                test.push((shifted(proto, &mut rng)?, c));
            }
        }
        Ok(Self { mask, db, calib, test })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feat(params: FeatureParams, bits: &str) -> BinaryFeature {
        BinaryFeature::from_bits(params, bits.chars().map(|c| c == '1')).unwrap()
    }

    #[test]
    fn accuracy_arithmetic() {
        assert_eq!(classification_accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(classification_accuracy(&[1, 2, 3], &[0, 0, 0]).unwrap(), 0.0);
        let pred: Vec<u8> = (0..19).map(|i| (i < 14) as u8).collect();
        let truth = vec![1u8; 19];
        assert_eq!(classification_accuracy(&pred, &truth).unwrap(), 14.0 / 19.0);
        assert!(matches!(classification_accuracy(&[1], &[1, 2]), Err(Error::Domain(_))));
    }

    #[test]
    fn empty_database() {
        let p = FeatureParams::new(1, 1, 8).unwrap();
        let db: Vec<(BinaryFeature, u8)> = vec![];
        assert!(matches!(best_match(&BinaryFeature::zeros(p), &db, &WeightVector::ones(p)), Err(Error::EmptyDatabase)));
    }

    #[test]
    fn hand_example_with_zeroed_region() {
        // Eight bits as eight layers of one cell, so no rotation is possible.
        // Bits 4..8 of the query are corrupted; zeroing them recovers label 'b'.
        let p = FeatureParams::new(8, 1, 1).unwrap();
        let db = vec![
            (feat(p, "00001111"), 'a'),
            (feat(p, "11000000"), 'b'),
            (feat(p, "00110000"), 'c'),
        ];
        let q = feat(p, "11001111");
        // All-ones distances: a=2, b=4, c=6.
        assert_eq!(best_match(&q, &db, &WeightVector::ones(p)).unwrap().label, 'a');
        let w = WeightVector::new(p, vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        // Zeroed distances: a=2, b=0, c=4.
        let m = best_match(&q, &db, &w).unwrap();
        assert_eq!((m.index, m.label, m.score), (1, 'b', 0.0));
    }

    #[test]
    fn exact_copy_wins_with_zero_score_and_ties_pick_lowest() {
        let p = FeatureParams::new(2, 1, 4).unwrap();
        let a = feat(p, "10000110");
        let db = vec![(a.rotate_sectors(1), 0), (a.clone(), 1)];
        let m = best_match(&a, &db, &WeightVector::ones(p)).unwrap();
        assert_eq!((m.index, m.score), (0, 0.0));
    }

    #[test]
    fn labels_missing_from_db() {
        let p = FeatureParams::new(1, 1, 8).unwrap();
        let db = vec![(BinaryFeature::zeros(p), 0)];
        let calib = vec![(BinaryFeature::zeros(p), 7)];
        assert!(matches!(learn_weights(&db, &calib, &LearnSettings::default()), Err(Error::LabelMismatch(_))));
    }

    #[test]
    fn weights_round_trip() {
        let p = FeatureParams::new(2, 2, 2).unwrap();
        let w = WeightVector::new(p, (0..8).map(|i| i as f64 * 0.1 - 0.3).collect()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        w.save(&path).unwrap();
        assert_eq!(WeightVector::load(&path).unwrap(), w);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"Phi\":2"));
    }

    #[test]
    fn exact_copies_are_already_separable() {
        let spec = DomainShiftSpec { params: FeatureParams::new(4, 4, 16).unwrap(), classes: 6, ..Default::default() };
        let corpus = DomainShiftCorpus::generate(&spec, 3).unwrap();
        let out = learn_weights(&corpus.db, &corpus.db, &LearnSettings::default()).unwrap();
        assert!(out.weights.norm() > 0.0);
        assert_eq!(nn_accuracy(&corpus.db, &corpus.db, &out.weights).unwrap(), 1.0);
    }

    #[test]
    fn learning_downweights_mask_and_is_monotone() {
        let spec = DomainShiftSpec { params: FeatureParams::new(8, 8, 16).unwrap(), ..Default::default() };
        let corpus = DomainShiftCorpus::generate(&spec, 11).unwrap();
        let out = learn_weights(&corpus.db, &corpus.calib, &LearnSettings::default()).unwrap();
        for pair in out.log.windows(2) {
            assert!(pair[1].objective <= pair[0].objective);
        }
        let mean = |masked: bool| {
            let v: Vec<f64> = out.weights.w.iter().zip(&corpus.mask).filter(|(_, &m)| m == masked).map(|(w, _)| *w).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean(true) < mean(false));
        let learned = nn_accuracy(&corpus.test, &corpus.db, &out.weights).unwrap();
        let plain = nn_accuracy(&corpus.test, &corpus.db, &WeightVector::ones(spec.params)).unwrap();
        assert!(learned >= plain + 0.1, "learned {learned} plain {plain}");
    }

    #[test]
    fn positive_scaling_keeps_argmin() {
        let spec = DomainShiftSpec { params: FeatureParams::new(4, 4, 16).unwrap(), classes: 5, ..Default::default() };
        let corpus = DomainShiftCorpus::generate(&spec, 5).unwrap();
        let w = WeightVector::new(spec.params, (0..spec.params.bit_count()).map(|i| ((i * 37) % 11) as f64 - 3.0).collect()).unwrap();
        for (q, _) in &corpus.test {
            let a = best_match(q, &corpus.db, &w).unwrap().index;
            let b = best_match(q, &corpus.db, &w.scaled(7.5)).unwrap().index;
            assert_eq!(a, b);
        }
    }
}
