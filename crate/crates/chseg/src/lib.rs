//! Unsupervised 3D lesion segmentation by Cahn-Hilliard phase separation.
//!
//! The pipeline turns a CT volume plus a liver mask into lesion masks:
//! preprocessing normalizes the masked intensities into an initial phase
//! field, the Cahn-Hilliard solver separates the field into two phases, and
//! histogram-mode separation plus soft tanh thresholding extract the lesion
//! voxels. Synthetic phantoms and overlap metrics close the loop for
//! self-verification without clinical data.

pub mod config;
pub mod error;
pub mod histseg;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod preprocess;
pub mod solver;
pub mod volume;

pub use error::{Error, Result};
