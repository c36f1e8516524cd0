use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{TriMesh, Vec3};
use crate::error::{Error, Result};

/// Reads an ASCII Wavefront OBJ. Polygons are fan-triangulated; texture and
/// normal indices are ignored.
pub fn load_obj(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, path)
}

pub(crate) fn parse_obj(text: &str, path: &Path) -> Result<TriMesh> {
    let perr = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut verts = Vec::new();
    let mut tris = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = no + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut it = content.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for slot in &mut c {
                    let tok = it.next().ok_or_else(|| perr(line, "vertex needs three coordinates".into()))?;
                    *slot = tok.parse().map_err(|_| perr(line, format!("bad coordinate {tok:?}")))?;
                }
                verts.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in it {
                    let head = tok.split('/').next().unwrap_or("");
                    let i: i64 = head.parse().map_err(|_| perr(line, format!("bad face index {tok:?}")))?;
                    let resolved = match i {
                        0 => return Err(perr(line, "face index 0 is invalid (indices are 1-based)".into())),
                        i if i > 0 => i - 1,
                        i => verts.len() as i64 + i,
                    };
                    if resolved < 0 || resolved as usize >= verts.len() {
                        return Err(perr(line, format!("face index {i} out of range")));
                    }
                    idx.push(resolved as usize);
                }
                if idx.len() < 3 {
                    return Err(perr(line, "face needs at least three vertices".into()));
                }
                for k in 1..idx.len() - 1 {
                    tris.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(verts, tris)
}

pub(crate) fn obj_string(mesh: &TriMesh) -> String {
    let mut s = String::with_capacity(mesh.vertex_count() * 48 + mesh.triangle_count() * 24);
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

/// Writes vertices with shortest round-trip formatting, so save→load is exact.
pub fn save_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, obj_string(mesh)).map_err(|e| Error::io(path, e))
}

/// Anchor sidecar: JSON object `{label: vertex_index}`.
pub fn save_anchors(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(mesh.anchors())?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_anchors(path: impl AsRef<Path>) -> Result<BTreeMap<String, usize>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
