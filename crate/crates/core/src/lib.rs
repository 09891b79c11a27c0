//! Dynamic keypoint filtering for feature-based visual odometry.
//!
//! Keypoints are tagged with panoptic segmentation regions (people, other
//! object instances, background, unlabeled pixels) and checked against the
//! epipolar geometry of background matches. Only keypoints judged static feed
//! the monocular odometry.

pub mod dataset;
pub mod evaluation;
pub mod features;
pub mod filter;
pub mod geometry;
pub mod odometry;
pub mod panoptic;
pub mod simulator;

pub use nalgebra;

pub use dataset::{Dataset, DatasetError};
pub use evaluation::{ate_rmse, classification_metrics, AlignmentKind, ClassificationMetrics, EvalError};
pub use features::{Descriptor, FeatureFrame, Keypoint, Match};
pub use filter::{filter_frame_pair, FilterConfig, FilterFlags, FilterReport, KeypointVerdict};
pub use geometry::{CameraIntrinsics, Correspondence, FundamentalMatrix, GeometryError, PixelPoint};
pub use odometry::{run_sequence, FrameData, OdometryError, PoseSE3, Trajectory, VoConfig};
pub use panoptic::{PanopticFrame, RegionTag};
pub use simulator::{generate_sequence, SceneConfig, SyntheticSequence};
