//! Distribution-matching feature traversal.
//!
//! Moves an input's deep features toward a target population by minimizing a
//! kernel witness under a budget on how far the features may travel, then
//! inverts the moved features back to pixels and measures the label change.

pub mod error;
pub mod evaluate;
pub mod features;
pub mod image;
pub mod mmd;
pub mod optim;
pub mod reconstruct;
pub mod rng;
pub mod traversal;

pub use error::{Error, Result};
pub use evaluate::{predict, ClassifierModel, SweepReport};
pub use features::{Extractor, ExtractorSpec, WeightSet};
pub use image::ImageTensor;
pub use mmd::{FeatureMatrix, Gram, KernelConfig};
pub use optim::{minimize, Bounds, MinimizeConfig, MinimizeTrace, Termination};
pub use reconstruct::{invert, ReconstructionConfig, ReconstructionResult};
pub use traversal::{traverse, TraversalConfig, TraversalResult};
