//! On-disk dataset layout.
//!
//! ```text
//! dataset/
//!   features.txt + timestamps.txt   precomputed keypoints, or
//!   rgb.txt + rgb/                  images, features extracted on load
//!   masks/<frame_id>.png|.json      panoptic label maps and sidecars
//!   calibration.txt                 optional, `fx fy cx cy`
//!   groundtruth.txt                 optional, TUM trajectory
//! ```
//!
//! `timestamps.txt` has `frame_id timestamp` lines. `rgb.txt` has
//! `timestamp path` lines (paths relative to the dataset root); the frame id
//! of an image is its line index among non-comment lines.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::evaluation::{format_tum, read_tum, EvalError};
use crate::features::io::{read_features_file, write_features_file};
use crate::features::{detect_and_describe, DetectorParams, FeatureError, FeatureFrame};
use crate::geometry::CameraIntrinsics;
use crate::odometry::{FrameData, Trajectory};
use crate::panoptic::{load_panoptic_frame, mask_paths, write_panoptic_frame, PanopticError};
use crate::simulator::SyntheticSequence;

pub const FEATURES_FILE: &str = "features.txt";
pub const TIMESTAMPS_FILE: &str = "timestamps.txt";
pub const RGB_LIST_FILE: &str = "rgb.txt";
pub const CALIBRATION_FILE: &str = "calibration.txt";
pub const GROUND_TRUTH_FILE: &str = "groundtruth.txt";
pub const MASKS_DIR: &str = "masks";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{} does not exist", .0.display())]
    Missing(PathBuf),
    #[error("{}: neither features.txt nor rgb.txt found", .0.display())]
    Layout(PathBuf),
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Features { path: PathBuf, source: FeatureError },
    #[error(transparent)]
    Panoptic(#[from] PanopticError),
    #[error("{}: {message}", path.display())]
    Image { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("ground truth {}: {source}", path.display())]
    GroundTruth { path: PathBuf, source: EvalError },
    #[error("frame {frame_id}: {message}")]
    Inconsistent { frame_id: u64, message: String },
    #[error("dataset has no frames")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameEntry {
    pub frame_id: u64,
    pub timestamp: f64,
}

#[derive(Debug, Clone)]
enum Source {
    Features(BTreeMap<u64, FeatureFrame>),
    Images(Vec<PathBuf>),
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub masks_dir: PathBuf,
    pub frames: Vec<FrameEntry>,
    pub intrinsics: Option<CameraIntrinsics>,
    pub ground_truth_path: Option<PathBuf>,
    source: Source,
}

fn read_text(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })
}

/// Non-comment, non-blank lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let t = l.trim();
        (!t.is_empty() && !t.starts_with('#')).then(|| (i + 1, t.split_whitespace().collect()))
    })
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, raw: &str) -> Result<T, DatasetError> {
    raw.parse().map_err(|_| DatasetError::Parse { path: path.to_path_buf(), line, message: format!("invalid number `{raw}`") })
}

fn parse_timestamps(path: &Path) -> Result<Vec<FrameEntry>, DatasetError> {
    let text = read_text(path)?;
    let mut out: Vec<FrameEntry> = Vec::new();
    for (line, fields) in data_lines(&text) {
        if fields.len() != 2 {
            return Err(DatasetError::Parse { path: path.to_path_buf(), line, message: "expected `frame_id timestamp`".into() });
        }
        let entry = FrameEntry { frame_id: parse_num(path, line, fields[0])?, timestamp: parse_num(path, line, fields[1])? };
        if let Some(prev) = out.last() {
            if !(entry.timestamp > prev.timestamp) || entry.frame_id <= prev.frame_id {
                return Err(DatasetError::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: "frame ids and timestamps must increase".into(),
                });
            }
        }
        out.push(entry);
    }
    Ok(out)
}

fn parse_rgb_list(root: &Path, path: &Path) -> Result<(Vec<FrameEntry>, Vec<PathBuf>), DatasetError> {
    let text = read_text(path)?;
    let mut entries: Vec<FrameEntry> = Vec::new();
    let mut images = Vec::new();
    for (line, fields) in data_lines(&text) {
        if fields.len() != 2 {
            return Err(DatasetError::Parse { path: path.to_path_buf(), line, message: "expected `timestamp path`".into() });
        }
        let timestamp: f64 = parse_num(path, line, fields[0])?;
        if entries.last().is_some_and(|p| !(timestamp > p.timestamp)) {
            return Err(DatasetError::Parse { path: path.to_path_buf(), line, message: "timestamps must increase".into() });
        }
        entries.push(FrameEntry { frame_id: entries.len() as u64, timestamp });
        images.push(root.join(fields[1]));
    }
    Ok((entries, images))
}

fn parse_calibration(path: &Path) -> Result<CameraIntrinsics, DatasetError> {
    let text = read_text(path)?;
    let mut lines = data_lines(&text);
    let (line, fields) = lines
        .next()
        .ok_or_else(|| DatasetError::Parse { path: path.to_path_buf(), line: 1, message: "empty calibration".into() })?;
    if fields.len() != 4 {
        return Err(DatasetError::Parse { path: path.to_path_buf(), line, message: "expected `fx fy cx cy`".into() });
    }
    let v: Vec<f64> = fields.iter().map(|f| parse_num(path, line, f)).collect::<Result<_, _>>()?;
    CameraIntrinsics::new(v[0], v[1], v[2], v[3])
        .map_err(|e| DatasetError::Parse { path: path.to_path_buf(), line, message: e.to_string() })
}

impl Dataset {
    /// Reads the frame index of a dataset. Masks are taken from `masks_dir`
    /// when given, else from `<root>/masks`.
    pub fn open(root: &Path, masks_dir: Option<&Path>) -> Result<Self, DatasetError> {
        if !root.is_dir() {
            return Err(DatasetError::Missing(root.to_path_buf()));
        }
        let masks_dir = masks_dir.map_or_else(|| root.join(MASKS_DIR), Path::to_path_buf);
        if !masks_dir.is_dir() {
            return Err(DatasetError::Missing(masks_dir));
        }

        let features_path = root.join(FEATURES_FILE);
        let rgb_path = root.join(RGB_LIST_FILE);
        let (frames, source) = if features_path.is_file() {
            let frames = parse_timestamps(&root.join(TIMESTAMPS_FILE))?;
            let mut features = read_features_file(&features_path)
                .map_err(|source| DatasetError::Features { path: features_path.clone(), source })?;
            if let Some(id) = features.keys().find(|id| frames.binary_search_by_key(id, |f| &f.frame_id).is_err()) {
                return Err(DatasetError::Inconsistent { frame_id: *id, message: "has features but no timestamp".into() });
            }
            for f in &frames {
                let frame = features.entry(f.frame_id).or_insert_with(|| FeatureFrame::new(f.frame_id, 0.0));
                frame.timestamp = f.timestamp;
            }
            (frames, Source::Features(features))
        } else if rgb_path.is_file() {
            let (frames, images) = parse_rgb_list(root, &rgb_path)?;
            (frames, Source::Images(images))
        } else {
            return Err(DatasetError::Layout(root.to_path_buf()));
        };
        if frames.is_empty() {
            return Err(DatasetError::Empty);
        }

        let calibration = root.join(CALIBRATION_FILE);
        let intrinsics = calibration.is_file().then(|| parse_calibration(&calibration)).transpose()?;
        let gt = root.join(GROUND_TRUTH_FILE);
        Ok(Self {
            root: root.to_path_buf(),
            masks_dir,
            frames,
            intrinsics,
            ground_truth_path: gt.is_file().then_some(gt),
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn ground_truth(&self) -> Result<Option<Trajectory>, DatasetError> {
        self.ground_truth_path
            .as_ref()
            .map(|p| read_tum(p).map_err(|source| DatasetError::GroundTruth { path: p.clone(), source }))
            .transpose()
    }

    /// Loads features (extracting them if needed) and masks of one frame.
    pub fn load_frame(
        &self,
        index: usize,
        detector: &DetectorParams,
        person_classes: &[String],
    ) -> Result<FrameData, DatasetError> {
        let entry = self.frames[index];
        let features = match &self.source {
            Source::Features(map) => map[&entry.frame_id].clone(),
            Source::Images(paths) => {
                let path = &paths[index];
                let img = image::open(path)
                    .map_err(|e| DatasetError::Image { path: path.clone(), message: e.to_string() })?
                    .to_luma8();
                let mut f = detect_and_describe(&img, detector)
                    .map_err(|source| DatasetError::Features { path: path.clone(), source })?;
                f.frame_id = entry.frame_id;
                f.timestamp = entry.timestamp;
                f
            }
        };
        let (png, json) = mask_paths(&self.masks_dir, entry.frame_id);
        for p in [&png, &json] {
            if !p.is_file() {
                return Err(DatasetError::Missing(p.clone()));
            }
        }
        let panoptic = load_panoptic_frame(&png, &json, person_classes)?;
        if panoptic.frame_id != entry.frame_id {
            return Err(DatasetError::Inconsistent {
                frame_id: entry.frame_id,
                message: format!("mask sidecar declares frame {}", panoptic.frame_id),
            });
        }
        let (w, h) = (panoptic.width() as f64, panoptic.height() as f64);
        if let Some(kp) = features
            .keypoints
            .iter()
            .find(|k| !(k.position.u >= 0.0 && k.position.v >= 0.0 && k.position.u < w && k.position.v < h))
        {
            return Err(DatasetError::Inconsistent {
                frame_id: entry.frame_id,
                message: format!("keypoint ({}, {}) lies outside the {w}x{h} mask", kp.position.u, kp.position.v),
            });
        }
        Ok(FrameData { features, panoptic })
    }

    /// Lazily loads every frame in order.
    pub fn frames<'a>(
        &'a self,
        detector: &'a DetectorParams,
        person_classes: &'a [String],
    ) -> impl Iterator<Item = Result<FrameData, DatasetError>> + Send + 'a {
        (0..self.len()).map(move |i| self.load_frame(i, detector, person_classes))
    }
}

/// Persists a synthetic sequence in the features layout.
pub fn write_synthetic_dataset(sequence: &SyntheticSequence, dir: &Path) -> Result<(), DatasetError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DatasetError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let features_path = dir.join(FEATURES_FILE);
    write_features_file(&features_path, sequence.frames.iter().map(|f| &f.features))
        .map_err(|source| DatasetError::Features { path: features_path, source })?;

    let mut stamps = String::new();
    for f in &sequence.frames {
        stamps.push_str(&format!("{} {}\n", f.features.frame_id, f.features.timestamp));
    }
    let path = dir.join(TIMESTAMPS_FILE);
    fs::write(&path, stamps).map_err(io(&path))?;

    let k = sequence.config.intrinsics;
    let path = dir.join(CALIBRATION_FILE);
    fs::write(&path, format!("{} {} {} {}\n", k.fx, k.fy, k.cx, k.cy)).map_err(io(&path))?;

    let masks = dir.join(MASKS_DIR);
    for f in &sequence.frames {
        write_panoptic_frame(&f.panoptic, &masks)?;
    }
    let path = dir.join(GROUND_TRUTH_FILE);
    fs::write(&path, format_tum(&sequence.ground_truth)).map_err(io(&path))?;
    Ok(())
}
