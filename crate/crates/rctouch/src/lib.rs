//! Co-design toolkit for RC-delay touchpoints embedded in 3D-printed objects.

pub mod bvh;
pub mod circuit;
pub mod error;
pub mod export;
pub mod geom;
pub mod mesh;
pub mod pipeline;
pub mod points;
pub mod trace;
pub mod robustness;
pub mod routing;
pub mod selection;
pub mod wire_opt;

pub use error::{Error, Result};
