//! Point cloud video classification with a single neighborhood query per
//! anchor and frame, plus the dense temporal-window baseline it replaces.

pub mod autodiff;
pub mod dataio;
pub mod dense;
pub mod error;
pub mod geom;
pub mod imitator;
pub mod model;
pub mod probe;
pub mod video;

pub use error::{Error, ErrorKind, Result};
