//! Region-based active learning for 3D point-cloud semantic segmentation.
//!
//! The crate splits a labeled point cloud into annotatable regions (grid
//! columns or ground/object supervoxels), trains an ensemble of point
//! classifiers on the revealed labels, scores unlabeled regions by ensemble
//! disagreement and queries the best ones from a simulated oracle. Annotation
//! effort is tracked both as a labeled point fraction and as the summed
//! cuboid surface of the selected regions.

pub mod active;
pub mod cloud;
pub mod error;
pub mod io;
pub mod learner;
pub mod metrics;
pub mod pca;
pub mod plot;
pub mod regions;
pub mod rng;
pub mod scene;
pub mod selection;
pub mod spatial;

pub use cloud::{bounding_box, Aabb, PointCloud};
pub use error::{Error, Result};
