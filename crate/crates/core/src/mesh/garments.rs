//! Flat garment silhouettes with labeled grasp points, in meters.

use serde::{Deserialize, Serialize};

use super::{mesh_from_contour, Contour2D, TriMesh, Vec2};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Towel,
    Shirt,
    Pants,
    Shorts,
}

impl Category {
    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Towel => "towel",
            Category::Shirt => "shirt",
            Category::Pants => "pants",
            Category::Shorts => "shorts",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "towel" => Some(Category::Towel),
            "shirt" => Some(Category::Shirt),
            "pants" => Some(Category::Pants),
            "shorts" => Some(Category::Shorts),
            _ => None,
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn labeled(points: &[(&str, f64, f64)]) -> Result<Contour2D> {
    let mut c = Contour2D::new(points.iter().map(|&(_, x, y)| Vec2::new(x, y)).collect())?;
    for &(label, x, y) in points {
        if !label.is_empty() {
            c = c.label_nearest(label, Vec2::new(x, y));
        }
    }
    Ok(c)
}

/// `width × height` rectangle with its four corners labeled.
pub fn towel_contour(width: f64, height: f64) -> Result<Contour2D> {
    labeled(&[
        ("corner_bl", 0.0, 0.0),
        ("corner_br", width, 0.0),
        ("corner_tr", width, height),
        ("corner_tl", 0.0, height),
    ])
}

/// Long-sleeve shirt with 19 grasp labels (hem, sides, armpits, sleeves,
/// cuffs, shoulders and collar).
pub fn shirt_contour() -> Result<Contour2D> {
    labeled(&[
        ("hem_left", -0.22, 0.0),
        ("hem_mid", 0.0, 0.0),
        ("hem_right", 0.22, 0.0),
        ("side_right", 0.22, 0.2),
        ("armpit_right", 0.22, 0.38),
        ("sleeve_under_right", 0.36, 0.23),
        ("cuff_inner_right", 0.48, 0.08),
        ("cuff_outer_right", 0.55, 0.13),
        ("sleeve_top_right", 0.39, 0.38),
        ("shoulder_right", 0.22, 0.56),
        ("collar_right", 0.08, 0.56),
        ("", 0.0, 0.51),
        ("collar_left", -0.08, 0.56),
        ("shoulder_left", -0.22, 0.56),
        ("sleeve_top_left", -0.39, 0.38),
        ("cuff_outer_left", -0.55, 0.13),
        ("cuff_inner_left", -0.48, 0.08),
        ("sleeve_under_left", -0.36, 0.23),
        ("armpit_left", -0.22, 0.38),
        ("side_left", -0.22, 0.2),
    ])
}

/// Pants with 12 grasp labels.
pub fn pants_contour() -> Result<Contour2D> {
    labeled(&[
        ("hem_outer_left", -0.19, 0.0),
        ("hem_inner_left", -0.04, 0.0),
        ("knee_inner_left", -0.035, 0.3),
        ("", 0.0, 0.52),
        ("knee_inner_right", 0.035, 0.3),
        ("hem_inner_right", 0.04, 0.0),
        ("hem_outer_right", 0.19, 0.0),
        ("knee_outer_right", 0.2, 0.3),
        ("hip_right", 0.21, 0.55),
        ("waist_right", 0.2, 0.72),
        ("", 0.0, 0.72),
        ("waist_left", -0.2, 0.72),
        ("hip_left", -0.21, 0.55),
        ("knee_outer_left", -0.2, 0.3),
    ])
}

/// Shorts with 8 grasp labels.
pub fn shorts_contour() -> Result<Contour2D> {
    labeled(&[
        ("hem_outer_left", -0.22, 0.0),
        ("hem_inner_left", -0.03, 0.0),
        ("", 0.0, 0.12),
        ("hem_inner_right", 0.03, 0.0),
        ("hem_outer_right", 0.22, 0.0),
        ("hip_right", 0.21, 0.22),
        ("waist_right", 0.2, 0.36),
        ("waist_left", -0.2, 0.36),
        ("hip_left", -0.21, 0.22),
    ])
}

/// One garment of the built-in corpus.
#[derive(Debug, Clone)]
pub struct GarmentModel {
    pub id: String,
    pub category: Category,
    pub mesh: TriMesh,
}

/// Default edge length used for the built-in meshes (m).
pub const DESK_EDGE_LENGTH: f64 = 0.035;

/// Closed two-sided meshes for a towel, a long-sleeve shirt and pants.
pub fn desk_corpus(edge_len: f64) -> Result<Vec<GarmentModel>> {
    Ok(vec![
        GarmentModel { id: "towel".into(), category: Category::Towel, mesh: mesh_from_contour(&towel_contour(0.4, 0.3)?, edge_len)? },
        GarmentModel { id: "shirt".into(), category: Category::Shirt, mesh: mesh_from_contour(&shirt_contour()?, edge_len)? },
        GarmentModel { id: "pants".into(), category: Category::Pants, mesh: mesh_from_contour(&pants_contour()?, edge_len)? },
    ])
}
