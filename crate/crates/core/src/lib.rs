pub mod bench;
pub mod cnn;
pub mod corpus;
pub mod datasetgen;
pub mod error;
pub mod field;
pub mod gs;
pub mod imageops;
pub mod propagate;
pub mod reconstruct;
pub mod tiling;

pub use error::{Error, Result};
pub use field::{ComplexField, Raster, SystemParams};
