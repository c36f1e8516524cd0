pub mod clothsim;
pub mod error;
pub mod features;
pub mod garmentdb;
pub mod grasp;
pub mod mesh;
pub mod metric;
pub mod pipeline;
pub mod registration;
pub mod sdf;
pub mod trajectory;

pub use error::{Error, Result};
