//! Database of simulated drapes: one entry per garment and labeled grasp
//! point, holding the hanging mesh, its binary feature and the draped
//! positions of every anchor.
//!
//! On disk a database is `manifest.json` plus one directory per entry,
//! `<garment>/<grasp_label>/{drape.obj, anchors.json, feat.bin}`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clothsim::{simulate_hang_report, ClothParams, SettleSettings};
use crate::error::{Error, Result};
use crate::features::{extract_feature_with_iso, BinaryFeature, FeatureParams};
use crate::mesh::garments::{Category, GarmentModel};
use crate::mesh::{load_obj, save_obj, TriMesh, Vec3};
use crate::metric::{ranked_matches, Match, WeightVector};
use crate::sdf::{build_distance_field, shell_field, sign_field, GridSpec};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DbSettings {
    pub cloth: ClothParams,
    pub settle: SettleSettings,
    pub feature: FeatureParams,
    /// Grid samples along the longest axis of each drape's distance field.
    pub sdf_nodes: usize,
    /// Feature iso level in voxels; thickens the thin draped sheets.
    pub iso_voxels: f64,
}

impl Default for DbSettings {
    fn default() -> Self {
        Self {
            cloth: ClothParams::default(),
            settle: SettleSettings { speed_tol: 2e-3, hold_time: 0.2, max_time: 30.0 },
            feature: FeatureParams::default(),
            sdf_nodes: 96,
            iso_voxels: 1.0,
        }
    }
}

impl DbSettings {
    pub fn validate(&self) -> Result<()> {
        self.cloth.validate()?;
        self.feature.validate()?;
        if self.sdf_nodes < 8 {
            return Err(Error::Validation(format!("sdf_nodes must be at least 8, got {}", self.sdf_nodes)));
        }
        if !(self.iso_voxels >= 0.0) {
            return Err(Error::Validation("iso_voxels must be non-negative".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form, recorded as provenance.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("settings serialize");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone)]
pub struct GarmentEntry {
    pub garment_id: String,
    pub category: Category,
    pub grasp_label: String,
    pub pin_vertex: usize,
    pub draped_mesh: TriMesh,
    pub feature: BinaryFeature,
    pub anchor_points: BTreeMap<String, Vec3>,
}

impl GarmentEntry {
    pub fn id(&self) -> String {
        format!("{}/{}", self.garment_id, self.grasp_label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryRef {
    pub id: String,
    pub garment_id: String,
    pub category: Category,
    pub grasp_label: String,
    pub pin_vertex: usize,
    /// Entry directory relative to the database root.
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatabaseManifest {
    pub feature_params: FeatureParams,
    pub settings_hash: String,
    pub settings: DbSettings,
    pub entries: Vec<EntryRef>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnchorRecord {
    vertex: usize,
    point: [f64; 3],
}

/// Feature of a draped mesh. Closed meshes are signed by flood fill; open
/// ones (cropped queries) are treated as thin shells.
pub fn mesh_feature(mesh: &TriMesh, settings: &DbSettings) -> Result<BinaryFeature> {
    let spec = GridSpec::fit_nodes(mesh, settings.sdf_nodes)?;
    let field = build_distance_field(mesh, Some(spec))?;
    let signed = if mesh.is_closed_manifold() { sign_field(mesh, &field)? } else { shell_field(&field) };
    extract_feature_with_iso(&signed, mesh, settings.feature, settings.iso_voxels * spec.voxel_size())
}

/// Hangs `garment` from the anchor `label` and describes the drape.
pub fn build_entry(garment: &GarmentModel, label: &str, settings: &DbSettings) -> Result<GarmentEntry> {
    let id = format!("{}/{label}", garment.id);
    let pin = garment.mesh.anchor(label).ok_or_else(|| Error::Domain(format!("{} has no anchor {label}", garment.id)))?;
    let (draped, _) = simulate_hang_report(&garment.mesh, pin, &settings.cloth, &settings.settle).map_err(|e| match e {
        Error::SimDiverged(msg) => Error::SimDiverged(format!("{id}: {msg}")),
        other => other,
    })?;
    let feature = mesh_feature(&draped, settings)?;
    let anchor_points = draped.anchors().iter().map(|(l, &v)| (l.clone(), draped.vertices()[v])).collect();
    Ok(GarmentEntry {
        garment_id: garment.id.clone(),
        category: garment.category,
        grasp_label: label.to_string(),
        pin_vertex: pin,
        draped_mesh: draped,
        feature,
        anchor_points,
    })
}

/// Every (garment, anchor) drape, in garment order then label order.
/// Entries are simulated in parallel.
pub fn build_entries(garments: &[GarmentModel], settings: &DbSettings) -> Result<Vec<GarmentEntry>> {
    settings.validate()?;
    let mut jobs = Vec::new();
    let mut ids = std::collections::BTreeSet::new();
    for g in garments {
        if g.mesh.anchors().is_empty() {
            return Err(Error::Domain(format!("garment {} has no anchors", g.id)));
        }
        if !ids.insert(g.id.clone()) {
            return Err(Error::Validation(format!("duplicate garment id {}", g.id)));
        }
        jobs.extend(g.mesh.anchors().keys().map(|l| (g, l.clone())));
    }
    jobs.par_iter().map(|(g, l)| build_entry(g, l, settings)).collect()
}

fn entry_dir(garment_id: &str, label: &str) -> PathBuf {
    Path::new(garment_id).join(label)
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Writes `entries` under `root` and returns the manifest (also written).
pub fn save_database(entries: &[GarmentEntry], settings: &DbSettings, root: impl AsRef<Path>) -> Result<DatabaseManifest> {
    let root = root.as_ref();
    let mut refs = Vec::with_capacity(entries.len());
    for e in entries {
        let dir = entry_dir(&e.garment_id, &e.grasp_label);
        let abs = root.join(&dir);
        create_dir(&abs)?;
        save_obj(&e.draped_mesh, abs.join("drape.obj"))?;
        let anchors: BTreeMap<&String, AnchorRecord> = e
            .draped_mesh
            .anchors()
            .iter()
            .map(|(l, &v)| {
                let p = e.draped_mesh.vertices()[v];
                (l, AnchorRecord { vertex: v, point: [p.x, p.y, p.z] })
            })
            .collect();
        let path = abs.join("anchors.json");
        std::fs::write(&path, serde_json::to_string_pretty(&anchors)?).map_err(|err| Error::io(&path, err))?;
        e.feature.save(abs.join("feat.bin"))?;
        refs.push(EntryRef {
            id: e.id(),
            garment_id: e.garment_id.clone(),
            category: e.category,
            grasp_label: e.grasp_label.clone(),
            pin_vertex: e.pin_vertex,
            dir,
        });
    }
    let manifest = DatabaseManifest { feature_params: settings.feature, settings_hash: settings.hash(), settings: *settings, entries: refs };
    manifest.validate()?;
    create_dir(root)?;
    let path = root.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Simulates every entry and persists the database under `root`.
pub fn build_database(garments: &[GarmentModel], settings: &DbSettings, root: impl AsRef<Path>) -> Result<DatabaseManifest> {
    let entries = build_entries(garments, settings)?;
    save_database(&entries, settings, root)
}

impl DatabaseManifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(&e.id) {
                return Err(Error::Validation(format!("duplicate entry id {}", e.id)));
            }
        }
        if self.settings.feature != self.feature_params {
            return Err(Error::Validation("manifest feature params disagree with its settings".into()));
        }
        Ok(())
    }

    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let path = root.as_ref().join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: DatabaseManifest = serde_json::from_str(&text)?;
        m.validate()?;
        Ok(m)
    }
}

/// Loads a database written by [`save_database`], checking that every
/// referenced file exists and that features share the manifest params.
pub fn load_database(root: impl AsRef<Path>) -> Result<(DatabaseManifest, Vec<GarmentEntry>)> {
    let root = root.as_ref();
    let manifest = DatabaseManifest::load(root)?;
    let mut entries = Vec::with_capacity(manifest.entries.len());
    for r in &manifest.entries {
        let dir = root.join(&r.dir);
        for f in ["drape.obj", "anchors.json", "feat.bin"] {
            let p = dir.join(f);
            if !p.is_file() {
                return Err(Error::Validation(format!("entry {} is missing {}", r.id, p.display())));
            }
        }
        let path = dir.join("anchors.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let records: BTreeMap<String, AnchorRecord> = serde_json::from_str(&text)?;
        let draped = load_obj(dir.join("drape.obj"))?.with_anchors(records.iter().map(|(l, a)| (l.clone(), a.vertex)).collect())?;
        let feature = BinaryFeature::load(dir.join("feat.bin"))?;
        if feature.params() != manifest.feature_params {
            return Err(Error::Validation(format!("entry {} has feature params {:?}", r.id, feature.params())));
        }
        entries.push(GarmentEntry {
            garment_id: r.garment_id.clone(),
            category: r.category,
            grasp_label: r.grasp_label.clone(),
            pin_vertex: r.pin_vertex,
            draped_mesh: draped,
            feature,
            anchor_points: records.into_iter().map(|(l, a)| (l, Vec3::from(a.point))).collect(),
        });
    }
    Ok((manifest, entries))
}

/// Ranks `entries` against a query feature; labels are entry indices.
pub fn rank_entries(query: &BinaryFeature, entries: &[GarmentEntry], w: &WeightVector) -> Result<Vec<Match<usize>>> {
    let db: Vec<(BinaryFeature, usize)> = entries.iter().enumerate().map(|(i, e)| (e.feature.clone(), i)).collect();
    ranked_matches(query, &db, w)
}

/// Degradations applied to a simulated drape so it resembles a depth-sensor
/// reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// Per-axis Gaussian vertex jitter (m).
    pub jitter: f64,
    /// Umbrella-operator smoothing passes (step 0.5).
    pub smoothing: usize,
    /// Fraction of vertices removed from the top of the mesh.
    pub crop: f64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.jitter >= 0.0) || !self.jitter.is_finite() {
            return Err(Error::InvalidNoiseSpec(format!("jitter must be finite and non-negative, got {}", self.jitter)));
        }
        if !(0.0..=0.5).contains(&self.crop) {
            return Err(Error::InvalidNoiseSpec(format!("crop fraction {} outside [0, 0.5]", self.crop)));
        }
        Ok(())
    }
}

/// Seeded jitter, then smoothing, then a crop of the highest vertices.
pub fn perturb_mesh(mesh: &TriMesh, noise: &NoiseSpec, seed: u64) -> Result<TriMesh> {
    noise.validate()?;
    let mut x = mesh.vertices().to_vec();
    if noise.jitter > 0.0 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise.jitter).map_err(|e| Error::InvalidNoiseSpec(e.to_string()))?;
        for v in &mut x {
            *v += Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }
    if noise.smoothing > 0 {
        let nbrs = mesh.vertex_neighbors();
        for _ in 0..noise.smoothing {
            let prev = x.clone();
            for (i, n) in nbrs.iter().enumerate() {
                if !n.is_empty() {
                    let avg = n.iter().map(|&j| prev[j]).sum::<Vec3>() / n.len() as f64;
                    x[i] = prev[i] + 0.5 * (avg - prev[i]);
                }
            }
        }
    }
    let out = mesh.with_positions(x);
    let removed = (noise.crop * out.vertex_count() as f64).round() as usize;
    if removed == 0 {
        return Ok(out);
    }
    let mut order: Vec<usize> = (0..out.vertex_count()).collect();
    order.sort_by(|&a, &b| out.vertices()[b].z.total_cmp(&out.vertices()[a].z).then(a.cmp(&b)));
    let mut keep = vec![true; out.vertex_count()];
    for &i in &order[..removed] {
        keep[i] = false;
    }
    let cropped = out.filter_vertices(|i| keep[i])?;
    if 2 * cropped.vertex_count() < out.vertex_count() {
        return Err(Error::InvalidNoiseSpec(format!(
            "crop leaves {} of {} vertices",
            cropped.vertex_count(),
            out.vertex_count()
        )));
    }
    Ok(cropped)
}

/// A reconstruction-like query derived from a database entry.
pub fn perturb_query(entry: &GarmentEntry, noise: &NoiseSpec, seed: u64) -> Result<TriMesh> {
    perturb_mesh(&entry.draped_mesh, noise, seed)
}

/// File listing calibration features inside a calibration directory.
pub const CALIBRATION_FILE: &str = "items.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationItem {
    /// Entry id (`garment/grasp_label`) the feature should retrieve.
    pub label: String,
    /// Feature file relative to the calibration directory.
    pub feature: PathBuf,
}

/// Writes labeled features as `<dir>/items.json` plus one `.bin` per item.
pub fn save_calibration_set(items: &[(BinaryFeature, String)], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let mut list = Vec::with_capacity(items.len());
    for (i, (f, label)) in items.iter().enumerate() {
        let name = PathBuf::from(format!("item_{i:04}.bin"));
        f.save(dir.join(&name))?;
        list.push(CalibrationItem { label: label.clone(), feature: name });
    }
    let path = dir.join(CALIBRATION_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&list)?).map_err(|e| Error::io(&path, e))
}

pub fn load_calibration_set(dir: impl AsRef<Path>) -> Result<Vec<(BinaryFeature, String)>> {
    let dir = dir.as_ref();
    let path = dir.join(CALIBRATION_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let list: Vec<CalibrationItem> = serde_json::from_str(&text)?;
    list.into_iter().map(|it| Ok((BinaryFeature::load(dir.join(&it.feature))?, it.label))).collect()
}
