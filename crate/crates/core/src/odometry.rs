//! Monocular frame-to-frame visual odometry on top of the keypoint filter.
//!
//! Each step estimates the relative motion from the static matches alone,
//! with a least-squares eight-point fit over all of them. Translation is only
//! known up to scale, so every step is given unit length.

use std::sync::mpsc;
use std::thread;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{match_nearest_neighbor, FeatureFrame};
use crate::filter::{
    correspondence, filter_frame_pair, FilterConfig, FilterError, FilterReport, FrameView, KeypointVerdict,
};
use crate::geometry::{
    essential_from_fundamental, estimate_fundamental_8pt, recover_relative_pose, CameraIntrinsics,
    Correspondence, GeometryError,
};
use crate::panoptic::{associate_things, Association, propagate_track_ids, PanopticFrame};

/// Frames buffered between the loader thread and the tracker.
const PIPELINE_DEPTH: usize = 4;

#[derive(Debug, Error)]
pub enum OdometryError {
    #[error("trajectory timestamps must increase strictly: {previous} then {next}")]
    NonMonotonicTimestamp { previous: f64, next: f64 },
    #[error("tracking lost: {0}")]
    TrackingLost(String),
    #[error("failed to load frame: {0}")]
    Input(String),
    #[error("sequence is empty")]
    EmptySequence,
    #[error(transparent)]
    Filter(#[from] FilterError),
}

/// Camera pose in the world frame (world-from-camera).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSE3 {
    pub timestamp: f64,
    pub translation: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

impl PoseSE3 {
    pub fn identity(timestamp: f64) -> Self {
        Self { timestamp, translation: Vector3::zeros(), rotation: UnitQuaternion::identity() }
    }

    pub fn from_isometry(timestamp: f64, iso: &Isometry3<f64>) -> Self {
        Self { timestamp, translation: iso.translation.vector, rotation: iso.rotation }
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.translation), self.rotation)
    }
}

/// Poses with strictly increasing timestamps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    poses: Vec<PoseSE3>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_poses(poses: Vec<PoseSE3>) -> Result<Self, OdometryError> {
        let mut t = Self::new();
        for p in poses {
            t.push(p)?;
        }
        Ok(t)
    }

    pub fn push(&mut self, pose: PoseSE3) -> Result<(), OdometryError> {
        if let Some(last) = self.poses.last() {
            if !(pose.timestamp > last.timestamp) {
                return Err(OdometryError::NonMonotonicTimestamp { previous: last.timestamp, next: pose.timestamp });
            }
        }
        self.poses.push(pose);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn poses(&self) -> &[PoseSE3] {
        &self.poses
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PoseSE3> {
        self.poses.iter()
    }

    pub fn last(&self) -> Option<&PoseSE3> {
        self.poses.last()
    }
}

impl<'a> IntoIterator for &'a Trajectory {
    type Item = &'a PoseSE3;
    type IntoIter = std::slice::Iter<'a, PoseSE3>;

    fn into_iter(self) -> Self::IntoIter {
        self.poses.iter()
    }
}

/// Pose of the current frame given the previous pose and static matches.
///
/// Fails with `TrackingLost` on fewer than eight matches or when the motion
/// cannot be recovered from them.
pub fn track_frame(
    prev_pose: &PoseSE3,
    timestamp: f64,
    matches: &[Correspondence],
    k: &CameraIntrinsics,
) -> Result<PoseSE3, OdometryError> {
    let lost = |e: GeometryError| OdometryError::TrackingLost(e.to_string());
    if matches.len() < 8 {
        return Err(lost(GeometryError::InsufficientMatches(matches.len())));
    }
    let f = estimate_fundamental_8pt(matches).map_err(lost)?;
    let e = essential_from_fundamental(f.matrix(), k).map_err(lost)?;
    let rel = recover_relative_pose(&e, matches, k).map_err(lost)?;
    // rel maps previous-camera coordinates to current-camera coordinates.
    let curr_from_prev = Isometry3::from_parts(
        Translation3::from(rel.translation.into_inner()),
        UnitQuaternion::from_rotation_matrix(&rel.rotation),
    );
    let world_from_curr = prev_pose.to_isometry() * curr_from_prev.inverse();
    Ok(PoseSE3::from_isometry(timestamp, &world_from_curr))
}

/// One input frame for [`run_sequence`].
#[derive(Debug, Clone)]
pub struct FrameData {
    pub features: FeatureFrame,
    pub panoptic: PanopticFrame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoConfig {
    /// When false every descriptor match is used for tracking.
    pub filtering: bool,
    pub filter: FilterConfig,
    pub intrinsics: CameraIntrinsics,
}

#[derive(Debug, Clone)]
pub struct SequenceOutput {
    pub trajectory: Trajectory,
    /// One report per frame after the first.
    pub reports: Vec<FilterReport>,
    /// Verdicts for every frame after the first, one per keypoint.
    pub verdicts: Vec<Vec<KeypointVerdict>>,
    /// Frames whose pose was held because tracking failed.
    pub tracking_lost: usize,
    /// Frames that could not be classified for lack of background.
    pub unclassified: usize,
}

struct Step {
    pose: PoseSE3,
    report: FilterReport,
    verdicts: Vec<KeypointVerdict>,
    lost: bool,
}

fn step(prev: &FrameData, curr: &mut FrameData, prev_pose: &PoseSE3, config: &VoConfig, next_track: &mut u64) -> Step {
    let timestamp = curr.features.timestamp;
    let (matches, report, verdicts) = if config.filtering {
        let result = filter_frame_pair(
            FrameView { features: &prev.features, panoptic: &prev.panoptic },
            FrameView { features: &curr.features, panoptic: &curr.panoptic },
            &config.filter,
        );
        match result {
            Ok(out) => {
                propagate_track_ids(&prev.panoptic, &mut curr.panoptic, &out.association, next_track);
                (out.static_correspondences(&prev.features, &curr.features), out.report, out.verdicts)
            }
            Err(e) => {
                log::warn!("frame {}: {e}", curr.features.frame_id);
                let assoc = associate_things(&prev.panoptic, &curr.panoptic, config.filter.iou_threshold);
                propagate_track_ids(&prev.panoptic, &mut curr.panoptic, &assoc, next_track);
                return Step {
                    pose: PoseSE3 { timestamp, ..*prev_pose },
                    report: FilterReport::unclassified(curr.features.frame_id),
                    verdicts: vec![KeypointVerdict::Static; curr.features.len()],
                    lost: true,
                };
            }
        }
    } else {
        let assoc = associate_things(&prev.panoptic, &curr.panoptic, config.filter.iou_threshold);
        propagate_track_ids(&prev.panoptic, &mut curr.panoptic, &assoc, next_track);
        let matches = match_nearest_neighbor(&prev.features, &curr.features, &config.filter.matching).unwrap_or_default();
        let corr = matches.iter().map(|m| correspondence(&prev.features, &curr.features, m)).collect();
        let verdicts = vec![KeypointVerdict::Static; curr.features.len()];
        let report = FilterReport::from_verdicts(curr.features.frame_id, &verdicts, None, false);
        (corr, report, verdicts)
    };
    match track_frame(prev_pose, timestamp, &matches, &config.intrinsics) {
        Ok(pose) => Step { pose, report, verdicts, lost: false },
        Err(e) => {
            log::warn!("frame {}: {e}", curr.features.frame_id);
            Step { pose: PoseSE3 { timestamp, ..*prev_pose }, report, verdicts, lost: true }
        }
    }
}

/// Runs odometry over a frame stream. Frames are pulled on a separate loader
/// thread so that I/O overlaps with tracking; results do not depend on timing.
pub fn run_sequence<I, E>(frames: I, config: &VoConfig) -> Result<SequenceOutput, OdometryError>
where
    I: IntoIterator<Item = Result<FrameData, E>>,
    I::IntoIter: Send,
    E: std::fmt::Display + Send,
{
    let iter = frames.into_iter();
    thread::scope(|scope| {
        let (tx, rx) = mpsc::sync_channel::<Result<FrameData, String>>(PIPELINE_DEPTH);
        scope.spawn(move || {
            for item in iter {
                if tx.send(item.map_err(|e| e.to_string())).is_err() {
                    break;
                }
            }
        });

        let mut rx = rx.into_iter();
        let mut prev = rx.next().ok_or(OdometryError::EmptySequence)?.map_err(OdometryError::Input)?;
        let mut next_track = 0u64;
        let first = prev.panoptic.clone();
        propagate_track_ids(&first, &mut prev.panoptic, &Association::default(), &mut next_track);

        let mut trajectory = Trajectory::new();
        trajectory.push(PoseSE3::identity(prev.features.timestamp))?;
        let mut out = SequenceOutput {
            trajectory,
            reports: Vec::new(),
            verdicts: Vec::new(),
            tracking_lost: 0,
            unclassified: 0,
        };
        for item in rx {
            let mut curr = item.map_err(OdometryError::Input)?;
            let prev_pose = *out.trajectory.last().expect("trajectory starts with one pose");
            let s = step(&prev, &mut curr, &prev_pose, config, &mut next_track);
            out.trajectory.push(s.pose)?;
            out.tracking_lost += s.lost as usize;
            out.unclassified += !s.report.classified as usize;
            out.reports.push(s.report);
            out.verdicts.push(s.verdicts);
            prev = curr;
        }
        Ok(out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn trajectory_rejects_non_increasing_time() {
        let mut t = Trajectory::new();
        t.push(PoseSE3::identity(1.0)).unwrap();
        assert!(t.push(PoseSE3::identity(1.0)).is_err());
        assert!(t.push(PoseSE3::identity(0.5)).is_err());
        t.push(PoseSE3::identity(1.5)).unwrap();
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn isometry_roundtrip() {
        let iso = Isometry3::new(Vector3::new(1.0, -2.0, 0.5), Vector3::new(0.1, 0.2, -0.3));
        let back = PoseSE3::from_isometry(3.0, &iso).to_isometry();
        assert_relative_eq!(back.to_homogeneous(), iso.to_homogeneous(), epsilon = 1e-15);
    }

    #[test]
    fn too_few_matches_lose_tracking() {
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap();
        let r = track_frame(&PoseSE3::identity(0.0), 1.0, &[], &k);
        assert!(matches!(r, Err(OdometryError::TrackingLost(_))));
    }

    #[test]
    fn empty_sequence_is_an_error() {
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap();
        let config = VoConfig { filtering: true, filter: FilterConfig::default(), intrinsics: k };
        let r = run_sequence(Vec::<Result<FrameData, String>>::new(), &config);
        assert!(matches!(r, Err(OdometryError::EmptySequence)));
    }
}
