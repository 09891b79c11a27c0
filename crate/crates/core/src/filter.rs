//! Per-frame-pair dynamic keypoint classification.
//!
//! For two consecutive frames, every keypoint of the current frame receives one
//! verdict:
//!
//! 1. keypoints on people are removed up front;
//! 2. descriptors are matched globally between the frames;
//! 3. a fundamental matrix is estimated robustly from background (stuff)
//!    matches, falling back to all non-person matches when the background is
//!    too thin;
//! 4. thing instances are associated frame-to-frame, and keypoints on
//!    instances with no predecessor are removed;
//! 5. matched keypoints on associated things, on unlabeled pixels, or whose
//!    two endpoints carry different region tags are classified by their
//!    distance to the epipolar line;
//! 6. unmatched keypoints on things or unlabeled pixels are removed, while
//!    unmatched background keypoints stay static.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{match_nearest_neighbor, FeatureError, FeatureFrame, Match, MatchParams};
use crate::geometry::{
    distance_from_matrix, estimate_fundamental_ransac, Correspondence, FundamentalMatrix,
    GeometryError, RansacParams,
};
use crate::panoptic::{
    associate_things, classify_keypoint_region, Association, PanopticError, PanopticFrame,
    RegionTag, DEFAULT_IOU_THRESHOLD,
};

pub const DEFAULT_EPIPOLAR_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KeypointVerdict {
    Static,
    /// Carries the measured epipolar distance (px).
    Dynamic(f64),
    FilteredPerson,
    FilteredNewObject,
    FilteredUnmatched,
}

impl KeypointVerdict {
    pub fn is_static(&self) -> bool {
        matches!(self, KeypointVerdict::Static)
    }

    /// Everything except `Static` is withheld from tracking.
    pub fn is_removed(&self) -> bool {
        !self.is_static()
    }
}

/// Which filter stages are active. Turning a stage off makes the keypoints it
/// would handle static.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterFlags {
    pub people: bool,
    pub things: bool,
    pub unknown: bool,
}

impl Default for FilterFlags {
    fn default() -> Self {
        Self { people: true, things: true, unknown: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Epipolar distance (px) at or above which a matched keypoint is dynamic.
    pub epipolar_threshold: f64,
    pub ransac: RansacParams,
    pub iou_threshold: f64,
    pub matching: MatchParams,
    pub flags: FilterFlags,
    /// Re-check background matches that are not RANSAC inliers against `F`.
    pub check_stuff: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            epipolar_threshold: DEFAULT_EPIPOLAR_THRESHOLD,
            ransac: RansacParams::default(),
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            matching: MatchParams::default(),
            flags: FilterFlags::default(),
            check_stuff: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("not enough background matches to estimate the fundamental matrix: {0}")]
    InsufficientBackground(GeometryError),
    #[error(transparent)]
    Panoptic(#[from] PanopticError),
    #[error("segmentation is {seg_w}x{seg_h} but keypoints come from frame {frame_id}")]
    FrameMismatch { frame_id: u64, seg_w: u32, seg_h: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    pub frame_id: u64,
    pub n_static: usize,
    pub n_dynamic: usize,
    pub n_person: usize,
    pub n_new_object: usize,
    pub n_unmatched: usize,
    pub fundamental: Option<FundamentalMatrix>,
    pub fallback_used: bool,
    /// False when the pair could not be classified at all.
    pub classified: bool,
}

#[derive(Serialize)]
struct ReportLine {
    frame_id: u64,
    n_static: usize,
    n_dynamic: usize,
    n_person: usize,
    n_new_object: usize,
    n_unmatched: usize,
    fallback_used: bool,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    unclassified: bool,
}

impl FilterReport {
    pub fn from_verdicts(
        frame_id: u64,
        verdicts: &[KeypointVerdict],
        fundamental: Option<FundamentalMatrix>,
        fallback_used: bool,
    ) -> Self {
        let mut r = Self {
            frame_id,
            n_static: 0,
            n_dynamic: 0,
            n_person: 0,
            n_new_object: 0,
            n_unmatched: 0,
            fundamental,
            fallback_used,
            classified: true,
        };
        for v in verdicts {
            match v {
                KeypointVerdict::Static => r.n_static += 1,
                KeypointVerdict::Dynamic(_) => r.n_dynamic += 1,
                KeypointVerdict::FilteredPerson => r.n_person += 1,
                KeypointVerdict::FilteredNewObject => r.n_new_object += 1,
                KeypointVerdict::FilteredUnmatched => r.n_unmatched += 1,
            }
        }
        r
    }

    /// Report for a pair that could not be classified; all counts are zero.
    pub fn unclassified(frame_id: u64) -> Self {
        Self { classified: false, fallback_used: true, ..Self::from_verdicts(frame_id, &[], None, true) }
    }

    pub fn total(&self) -> usize {
        self.n_static + self.n_dynamic + self.n_person + self.n_new_object + self.n_unmatched
    }

    /// One JSON object, no trailing newline.
    pub fn to_json_line(&self) -> String {
        let line = ReportLine {
            frame_id: self.frame_id,
            n_static: self.n_static,
            n_dynamic: self.n_dynamic,
            n_person: self.n_person,
            n_new_object: self.n_new_object,
            n_unmatched: self.n_unmatched,
            fallback_used: self.fallback_used,
            unclassified: !self.classified,
        };
        serde_json::to_string(&line).expect("report serializes")
    }
}

/// Keypoints and segmentation of one frame.
#[derive(Debug, Clone, Copy)]
pub struct FrameView<'a> {
    pub features: &'a FeatureFrame,
    pub panoptic: &'a PanopticFrame,
}

#[derive(Debug, Clone)]
pub struct FilterOutput {
    /// One verdict per current-frame keypoint.
    pub verdicts: Vec<KeypointVerdict>,
    pub report: FilterReport,
    /// All descriptor matches, `ref_index` into the previous frame.
    pub matches: Vec<Match>,
    pub association: Association,
}

impl FilterOutput {
    /// Matches whose current keypoint is static, in match order.
    pub fn static_correspondences(&self, prev: &FeatureFrame, curr: &FeatureFrame) -> Vec<Correspondence> {
        self.matches
            .iter()
            .filter(|m| self.verdicts[m.query_index].is_static())
            .map(|m| correspondence(prev, curr, m))
            .collect()
    }
}

pub fn correspondence(prev: &FeatureFrame, curr: &FeatureFrame, m: &Match) -> Correspondence {
    Correspondence::new(prev.keypoints[m.ref_index].position, curr.keypoints[m.query_index].position)
}

/// Matches whose two endpoints are both on background stuff.
pub fn select_stuff_matches(matches: &[Match], prev_tags: &[RegionTag], curr_tags: &[RegionTag]) -> Vec<Match> {
    matches
        .iter()
        .filter(|m| prev_tags[m.ref_index] == RegionTag::Stuff && curr_tags[m.query_index] == RegionTag::Stuff)
        .copied()
        .collect()
}

fn classify_distance(f: &FundamentalMatrix, c: &Correspondence, threshold: f64) -> KeypointVerdict {
    match distance_from_matrix(f.matrix(), c.first, c.second) {
        Ok(d) if d < threshold => KeypointVerdict::Static,
        Ok(d) => KeypointVerdict::Dynamic(d),
        Err(_) => KeypointVerdict::Dynamic(f64::INFINITY),
    }
}

/// Static when the second point lies closer than `threshold` to the epipolar
/// line of the first, dynamic otherwise. A degenerate line counts as dynamic
/// with infinite distance.
pub fn classify_matched_points(
    f: &FundamentalMatrix,
    pairs: &[Correspondence],
    threshold: f64,
) -> Vec<KeypointVerdict> {
    pairs.iter().map(|c| classify_distance(f, c, threshold)).collect()
}

fn region_tags(frame: FrameView<'_>, people: bool) -> Result<Vec<RegionTag>, PanopticError> {
    frame
        .features
        .keypoints
        .iter()
        .map(|kp| {
            let tag = classify_keypoint_region(frame.panoptic, kp)?;
            if tag == RegionTag::Person && !people {
                let (x, y) = (kp.position.u as u32, kp.position.v as u32);
                let id = frame
                    .panoptic
                    .things()
                    .iter()
                    .find(|t| t.mask.get(x, y))
                    .map(|t| t.instance_id)
                    .expect("person tag comes from a thing mask");
                return Ok(RegionTag::Thing(id));
            }
            Ok(tag)
        })
        .collect()
}

/// RANSAC over a subset of matches; returns the model and the indices (into
/// `matches`) of its inliers.
fn ransac_subset(
    prev: &FeatureFrame,
    curr: &FeatureFrame,
    subset: &[Match],
    params: &RansacParams,
) -> Result<(FundamentalMatrix, HashSet<(usize, usize)>), GeometryError> {
    let pairs: Vec<Correspondence> = subset.iter().map(|m| correspondence(prev, curr, m)).collect();
    let f = estimate_fundamental_ransac(&pairs, params)?;
    let inliers = subset
        .iter()
        .zip(f.inlier_mask())
        .filter(|(_, &inlier)| inlier)
        .map(|(m, _)| (m.ref_index, m.query_index))
        .collect();
    Ok((f, inliers))
}

/// Classifies every keypoint of `curr` against `prev`.
pub fn filter_frame_pair(
    prev: FrameView<'_>,
    curr: FrameView<'_>,
    config: &FilterConfig,
) -> Result<FilterOutput, FilterError> {
    filter_frame_pair_with_fundamental(prev, curr, config, None)
}

/// As [`filter_frame_pair`], but with an optional externally supplied
/// fundamental matrix that replaces the robust estimate.
pub fn filter_frame_pair_with_fundamental(
    prev: FrameView<'_>,
    curr: FrameView<'_>,
    config: &FilterConfig,
    fundamental: Option<&FundamentalMatrix>,
) -> Result<FilterOutput, FilterError> {
    let flags = config.flags;
    let prev_tags = region_tags(prev, flags.people)?;
    let curr_tags = region_tags(curr, flags.people)?;

    let matches = match match_nearest_neighbor(prev.features, curr.features, &config.matching) {
        Ok(m) => m,
        Err(FeatureError::EmptyFrame) => Vec::new(),
        Err(e) => unreachable!("matching only fails on empty frames: {e}"),
    };

    let mut fallback_used = false;
    let (f, ransac_inliers) = match fundamental {
        Some(f) => (f.clone(), HashSet::new()),
        None => {
            let stuff = select_stuff_matches(&matches, &prev_tags, &curr_tags);
            let primary = if stuff.len() >= 8 {
                ransac_subset(prev.features, curr.features, &stuff, &config.ransac)
            } else {
                Err(GeometryError::InsufficientMatches(stuff.len()))
            };
            match primary {
                Ok(r) => r,
                Err(_) => {
                    fallback_used = true;
                    let wider: Vec<Match> = matches
                        .iter()
                        .filter(|m| prev_tags[m.ref_index] != RegionTag::Person && curr_tags[m.query_index] != RegionTag::Person)
                        .copied()
                        .collect();
                    ransac_subset(prev.features, curr.features, &wider, &config.ransac)
                        .map_err(FilterError::InsufficientBackground)?
                }
            }
        }
    };

    let association = associate_things(prev.panoptic, curr.panoptic, config.iou_threshold);

    let mut match_of: Vec<Option<&Match>> = vec![None; curr.features.len()];
    for m in &matches {
        match_of[m.query_index] = Some(m);
    }

    let threshold = config.epipolar_threshold;
    let verdicts: Vec<KeypointVerdict> = curr_tags
        .iter()
        .enumerate()
        .map(|(i, &tag)| {
            let m = match_of[i];
            let prev_tag = m.map(|m| prev_tags[m.ref_index]);
            let by_distance = |m: &Match| classify_distance(&f, &correspondence(prev.features, curr.features, m), threshold);
            // Matches whose endpoints disagree on region are judged like unknown ones.
            let cross_region = |m: &Match| {
                if flags.unknown {
                    by_distance(m)
                } else {
                    KeypointVerdict::Static
                }
            };
            match tag {
                RegionTag::Person => KeypointVerdict::FilteredPerson,
                RegionTag::Thing(_) if !flags.things => KeypointVerdict::Static,
                RegionTag::Thing(c) if association.is_new(c) => KeypointVerdict::FilteredNewObject,
                RegionTag::Thing(c) => match (m, prev_tag) {
                    (Some(m), Some(RegionTag::Thing(p))) if association.previous_of(c) == Some(p) => by_distance(m),
                    (Some(m), _) => cross_region(m),
                    (None, _) => KeypointVerdict::FilteredUnmatched,
                },
                RegionTag::Unknown if !flags.unknown => KeypointVerdict::Static,
                RegionTag::Unknown => match m {
                    Some(m) => by_distance(m),
                    None => KeypointVerdict::FilteredUnmatched,
                },
                RegionTag::Stuff => match (m, prev_tag) {
                    (None, _) => KeypointVerdict::Static,
                    (Some(m), Some(RegionTag::Stuff)) => {
                        if config.check_stuff && !ransac_inliers.contains(&(m.ref_index, m.query_index)) {
                            by_distance(m)
                        } else {
                            KeypointVerdict::Static
                        }
                    }
                    (Some(m), _) => cross_region(m),
                },
            }
        })
        .collect();

    let report = FilterReport::from_verdicts(curr.features.frame_id, &verdicts, Some(f), fallback_used);
    Ok(FilterOutput { verdicts, report, matches, association })
}
