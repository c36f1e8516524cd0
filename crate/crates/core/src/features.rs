//! Cylindrical binary shape descriptor for hanging garments and its
//! rotation-invariant Hamming matcher.
//!
//! The vertical extent of the mesh is cut into `layers` slabs, top down. Each
//! slab is divided in the horizontal plane into `rings × sectors` polar cells
//! around the mean `(x, y)` of the top slab's vertices. A cell's bit is set
//! when the signed distance at its center is non-positive.
//!
//! Bit layout is layer-major, then ring, then sector (sector fastest), packed
//! little-endian into `u64` words: bit `i` lives in word `i / 64` at position
//! `i % 64`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec3};
use crate::sdf::SignedDistanceField;

/// Upper bound on `layers × rings × sectors`.
pub const MAX_FEATURE_BITS: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct FeatureParams {
    #[serde(rename = "N")]
    pub layers: usize,
    #[serde(rename = "R")]
    pub rings: usize,
    #[serde(rename = "Phi")]
    pub sectors: usize,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self { layers: 16, rings: 16, sectors: 16 }
    }
}

impl FeatureParams {
    pub fn new(layers: usize, rings: usize, sectors: usize) -> Result<Self> {
        let p = Self { layers, rings, sectors };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.rings == 0 || self.sectors == 0 {
            return Err(Error::Domain(format!("feature params must be positive: {self:?}")));
        }
        if self.layers.saturating_mul(self.rings).saturating_mul(self.sectors) > MAX_FEATURE_BITS {
            return Err(Error::Domain(format!("feature too large: {self:?}")));
        }
        Ok(())
    }

    pub fn bit_count(&self) -> usize {
        self.layers * self.rings * self.sectors
    }

    pub fn index(&self, layer: usize, ring: usize, sector: usize) -> usize {
        (layer * self.rings + ring) * self.sectors + sector
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryFeature {
    params: FeatureParams,
    words: Vec<u64>,
}

impl BinaryFeature {
    pub fn zeros(params: FeatureParams) -> Self {
        Self { params, words: vec![0; params.bit_count().div_ceil(64)] }
    }

    pub fn from_bits(params: FeatureParams, bits: impl IntoIterator<Item = bool>) -> Result<Self> {
        params.validate()?;
        let mut f = Self::zeros(params);
        let mut n = 0;
        for (i, b) in bits.into_iter().enumerate() {
            if i >= params.bit_count() {
                return Err(Error::Domain("too many bits for params".into()));
            }
            f.set(i, b);
            n += 1;
        }
        if n != params.bit_count() {
            return Err(Error::Domain(format!("expected {} bits, got {n}", params.bit_count())));
        }
        Ok(f)
    }

    pub fn params(&self) -> FeatureParams {
        self.params
    }

    pub fn len(&self) -> usize {
        self.params.bit_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }

    pub fn hamming(&self, other: &BinaryFeature) -> u32 {
        self.words.iter().zip(&other.words).map(|(a, b)| (a ^ b).count_ones()).sum()
    }

    /// Indices of bits where `self` and `other` differ.
    pub fn mismatches<'a>(&'a self, other: &'a BinaryFeature) -> impl Iterator<Item = usize> + 'a {
        self.words.iter().zip(&other.words).enumerate().flat_map(|(w, (a, b))| {
            let mut x = a ^ b;
            std::iter::from_fn(move || {
                if x == 0 {
                    return None;
                }
                let t = x.trailing_zeros() as usize;
                x &= x - 1;
                Some(w * 64 + t)
            })
        })
    }

    /// Moves the bit in sector `k` to sector `(k + shift) mod Φ` in every
    /// (layer, ring) group.
    pub fn rotate_sectors(&self, shift: usize) -> BinaryFeature {
        let phi = self.params.sectors;
        let s = shift % phi;
        if s == 0 {
            return self.clone();
        }
        if phi <= 64 && 64 % phi == 0 {
            let (m_hi, m_lo) = lane_masks(phi, s);
            let words = self
                .words
                .iter()
                .map(|&w| {
                    let left = (w << s) & m_hi;
                    let right = (w >> (phi - s)) & m_lo;
                    left | right
                })
                .collect();
            return BinaryFeature { params: self.params, words };
        }
        let mut out = BinaryFeature::zeros(self.params);
        let groups = self.params.layers * self.params.rings;
        for g in 0..groups {
            for k in 0..phi {
                if self.get(g * phi + k) {
                    out.set(g * phi + (k + s) % phi, true);
                }
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.words.len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Feature file: `N, R, Φ` as little-endian `u32`, then the packed words.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        for v in [self.params.layers, self.params.rings, self.params.sectors] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        for word in &self.words {
            w.write_all(&word.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let bad = |m: &str| Error::Domain(format!("feature file: {m}"));
        let mut head = [0u8; 12];
        r.read_exact(&mut head).map_err(|_| bad("short header"))?;
        let v = |k: usize| u32::from_le_bytes(head[4 * k..4 * k + 4].try_into().expect("4 bytes")) as usize;
        let params = FeatureParams::new(v(0), v(1), v(2))?;
        let nwords = params.bit_count().div_ceil(64);
        let mut buf = vec![0u8; 8 * nwords];
        r.read_exact(&mut buf).map_err(|_| bad("short body"))?;
        let words = buf.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(Self { params, words })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&bytes[..])
    }
}

fn lane_masks(width: usize, shift: usize) -> (u64, u64) {
    let lane_lo = (1u64 << shift) - 1;
    let mut lo = 0u64;
    let mut l = 0;
    while l < 64 {
        lo |= lane_lo << l;
        l += width;
    }
    let lane_all = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
    let mut all = 0u64;
    let mut l = 0;
    while l < 64 {
        all |= lane_all << l;
        l += width;
    }
    (all & !lo, lo)
}

/// Minimum Hamming distance over sector rotations and the shift achieving it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RotationMatch {
    pub distance: u32,
    /// Rotation applied to the first argument (lowest shift on ties).
    pub shift: usize,
}

pub fn rotation_distance(a: &BinaryFeature, b: &BinaryFeature) -> Result<RotationMatch> {
    if a.params != b.params {
        return Err(Error::Domain(format!("feature params differ: {:?} vs {:?}", a.params, b.params)));
    }
    let mut best = RotationMatch { distance: u32::MAX, shift: 0 };
    for s in 0..a.params.sectors {
        let d = a.rotate_sectors(s).hamming(b);
        if d < best.distance {
            best = RotationMatch { distance: d, shift: s };
        }
    }
    Ok(best)
}

/// Extracts the descriptor with cells set where the signed distance is ≤ 0.
pub fn extract_feature(field: &SignedDistanceField, mesh: &TriMesh, params: FeatureParams) -> Result<BinaryFeature> {
    extract_feature_with_iso(field, mesh, params, 0.0)
}

/// Same as [`extract_feature`] but with cells set where the signed distance is
/// at most `iso`. A positive `iso` thickens thin sheets into shells.
pub fn extract_feature_with_iso(
    field: &SignedDistanceField,
    mesh: &TriMesh,
    params: FeatureParams,
    iso: f64,
) -> Result<BinaryFeature> {
    params.validate()?;
    if mesh.vertex_count() == 0 {
        return Err(Error::InvalidMesh("mesh has no vertices to layer".into()));
    }
    let (lo, hi) = mesh.bounds();
    let spec = field.spec();
    if !spec.contains(&lo) || !spec.contains(&hi) {
        return Err(Error::Domain("mesh extends beyond the distance field grid".into()));
    }
    let height = hi.z - lo.z;
    if !(height > 0.0) {
        return Err(Error::InvalidMesh("mesh has no vertical extent".into()));
    }
    let dz = height / params.layers as f64;
    let top: Vec<&Vec3> = mesh.vertices().iter().filter(|v| v.z >= hi.z - dz).collect();
    let ox = top.iter().map(|v| v.x).sum::<f64>() / top.len() as f64;
    let oy = top.iter().map(|v| v.y).sum::<f64>() / top.len() as f64;
    let r_max = mesh.vertices().iter().map(|v| (v.x - ox).hypot(v.y - oy)).fold(0.0, f64::max);
    if !(r_max > 0.0) {
        return Err(Error::InvalidMesh("all vertices lie on the polar axis".into()));
    }
    let dr = r_max / params.rings as f64;
    let dphi = std::f64::consts::TAU / params.sectors as f64;

    // Sector directions are shared by every ring and layer.
    let dirs: Vec<(f64, f64)> =
        (0..params.sectors).map(|k| ((k as f64 + 0.5) * dphi).cos()).zip((0..params.sectors).map(|k| ((k as f64 + 0.5) * dphi).sin())).collect();

    let mut out = BinaryFeature::zeros(params);
    for layer in 0..params.layers {
        let z = hi.z - (layer as f64 + 0.5) * dz;
        for ring in 0..params.rings {
            let r = (ring as f64 + 0.5) * dr;
            for (sector, (c, s)) in dirs.iter().enumerate() {
                let p = Vec3::new(ox + r * c, oy + r * s, z);
                if let Some(v) = field.nearest_value(&p) {
                    if v <= iso {
                        out.set(params.index(layer, ring, sector), true);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Unoptimized per-cell reference: explicit index arithmetic for every shift.
    fn naive_rotation_distance(a: &BinaryFeature, b: &BinaryFeature) -> (u32, usize) {
        let p = a.params();
        let mut best = (u32::MAX, 0);
        for s in 0..p.sectors {
            let mut d = 0;
            for l in 0..p.layers {
                for r in 0..p.rings {
                    for k in 0..p.sectors {
                        let src = a.get(p.index(l, r, k));
                        let dst = b.get(p.index(l, r, (k + s) % p.sectors));
                        d += (src != dst) as u32;
                    }
                }
            }
            if d < best.0 {
                best = (d, s);
            }
        }
        best
    }

    fn random_feature(params: FeatureParams, seed: u64) -> BinaryFeature {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        BinaryFeature::from_bits(params, (0..params.bit_count()).map(|_| rng.random_bool(0.5))).unwrap()
    }

    #[test]
    fn default_has_4096_bits() {
        assert_eq!(FeatureParams::default().bit_count(), 4096);
        assert_eq!(BinaryFeature::zeros(FeatureParams::default()).words().len(), 64);
    }

    #[test]
    fn identity_and_rotation_are_zero() {
        let a = random_feature(FeatureParams::default(), 1);
        assert_eq!(rotation_distance(&a, &a).unwrap().distance, 0);
        let m = rotation_distance(&a, &a.rotate_sectors(3)).unwrap();
        assert_eq!(m, RotationMatch { distance: 0, shift: 3 });
    }

    #[test]
    fn params_mismatch_is_domain_error() {
        let a = BinaryFeature::zeros(FeatureParams::default());
        let b = BinaryFeature::zeros(FeatureParams::new(16, 16, 8).unwrap());
        assert!(matches!(rotation_distance(&a, &b), Err(Error::Domain(_))));
    }

    #[test]
    fn matches_naive_for_random_pairs() {
        for seed in 0..20 {
            let a = random_feature(FeatureParams::default(), 2 * seed);
            let b = random_feature(FeatureParams::default(), 2 * seed + 1);
            let m = rotation_distance(&a, &b).unwrap();
            assert_eq!((m.distance, m.shift), naive_rotation_distance(&a, &b));
        }
    }

    #[test]
    fn generic_path_matches_naive() {
        // 10 sectors does not divide 64, so the per-bit fallback runs.
        let p = FeatureParams::new(3, 5, 10).unwrap();
        for seed in 0..10 {
            let a = random_feature(p, 100 + seed);
            let b = random_feature(p, 200 + seed);
            let m = rotation_distance(&a, &b).unwrap();
            assert_eq!((m.distance, m.shift), naive_rotation_distance(&a, &b));
        }
    }

    #[test]
    fn file_round_trip() {
        let a = random_feature(FeatureParams::new(4, 3, 7).unwrap(), 9);
        let back = BinaryFeature::read_from(&a.to_bytes()[..]).unwrap();
        assert_eq!(a, back);
        assert_eq!(&a.to_bytes()[..4], &4u32.to_le_bytes());
    }

    proptest! {
        #[test]
        fn rotation_distance_symmetric(seed_a in 0u64..1000, seed_b in 0u64..1000, phi in prop::sample::select(vec![4usize, 8, 16, 12])) {
            let p = FeatureParams::new(4, 4, phi).unwrap();
            let a = random_feature(p, seed_a);
            let b = random_feature(p, seed_b + 5000);
            let ab = rotation_distance(&a, &b).unwrap().distance;
            let ba = rotation_distance(&b, &a).unwrap().distance;
            prop_assert_eq!(ab, ba);
            prop_assert!(ab <= a.hamming(&b));
        }

        #[test]
        fn rotation_composes(seed in 0u64..1000, s1 in 0usize..16, s2 in 0usize..16) {
            let a = random_feature(FeatureParams::default(), seed);
            prop_assert_eq!(a.rotate_sectors(s1).rotate_sectors(s2), a.rotate_sectors(s1 + s2));
            prop_assert_eq!(a.rotate_sectors(s1).count_ones(), a.count_ones());
        }
    }
}
