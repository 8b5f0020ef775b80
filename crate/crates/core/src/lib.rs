//! Next-best-view planning for active object reconstruction.
//!
//! The planner keeps a classified voxel map of the partially scanned
//! object, summarizes occupied and frontier voxels as a small set of
//! ellipsoids (GMM clustering + minimum-volume enclosing ellipsoids), and
//! scores every candidate viewpoint by projecting those ellipsoids into the
//! image as conics. A ray-casting evaluator is kept alongside as the
//! reference the projection scores are measured against.
//!
//! Pipeline, one iteration:
//!
//! 1. [`sampling`] proposes candidate views on a sphere sized to the
//!    object's bounding box.
//! 2. [`projection`] (or [`oracle`]) scores them.
//! 3. [`planner`] picks the best admissible view under the longitude
//!    partition constraint.
//! 4. [`render`] simulates the depth camera; [`voxel`] integrates the
//!    observation; [`ellipsoid`] refits the ellipsoid representation.
//!
//! [`harness`] wraps the loop with the coverage metric, CSV records and
//! run aggregation.

pub mod ellipsoid;
pub mod error;
pub mod geometry;
pub mod gmm;
pub mod harness;
pub mod mesh;
pub mod mvee;
pub mod oracle;
pub mod planner;
pub mod projection;
pub mod render;
pub mod sampling;
pub mod voxel;

pub use error::{NbvError, Result};
pub use geometry::{Aabb, CameraIntrinsics, Pose};
