//! Point cloud change detection between survey epochs of a structure.
//!
//! Clouds from two visits are brought into one frame (landmark rough
//! alignment followed by ICP), compared point by point with nearest-neighbor
//! distances, and summarized with Hausdorff statistics and a change map.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cloud;
pub mod distances;
pub mod error;
pub mod io;
pub mod kdtree;
pub mod pipeline;
pub mod registration;
pub mod segmentation;
pub mod sim;
pub mod synth;

pub use cloud::{merge, Aabb, Point3, PointCloud, Rgb, Vector3};
pub use distances::{c2c_distances, directed_hausdorff, hausdorff, DistanceField, DistanceSummary};
pub use error::{Error, Result};
pub use io::{load_cloud, load_cloud_auto, save_cloud, CloudFormat};
pub use kdtree::KdIndex;
pub use pipeline::{classify_changes, compare_epochs, register_epoch, ComparisonReport, EpochRecord, Registry};
pub use registration::{
    apply_transform, icp_refine, rough_align, Correspondence, CorrespondenceSet, IcpParams, IcpResult, RigidTransform,
};
pub use segmentation::{crop, exclude, ObbRegion, RegionSpec};
pub use sim::{simulate_crack_like_edge, simulate_true_crack, SlenderElement};
