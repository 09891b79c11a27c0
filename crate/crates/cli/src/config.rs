//! Run settings: defaults, then a `key = value` config file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use dynkp_core::evaluation::{AlignmentKind, DEFAULT_MAX_TIME_DIFFERENCE};
use dynkp_core::features::DetectorParams;
use dynkp_core::{CameraIntrinsics, FilterConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: PathBuf,
    /// Defaults to `<dataset>/masks`.
    pub masks: Option<PathBuf>,
    pub out: PathBuf,
    /// When false every descriptor match feeds the odometry.
    pub filtering: bool,
    pub filter: FilterConfig,
    /// Overrides the dataset's `calibration.txt`.
    pub intrinsics: Option<CameraIntrinsics>,
    pub detector: DetectorParams,
    pub person_classes: Vec<String>,
    pub alignment: AlignmentKind,
    pub max_dt: f64,
}

/// Every key accepted in config files and by `--set`.
pub const KEYS: &[&str] = &[
    "dataset",
    "masks",
    "out",
    "filtering",
    "threshold",
    "people",
    "things",
    "unknown",
    "check-stuff",
    "iou-threshold",
    "ransac-iterations",
    "ransac-threshold",
    "ransac-min-inliers",
    "seed",
    "max-hamming",
    "cross-check",
    "intrinsics",
    "n-features",
    "levels",
    "scale-factor",
    "fast-threshold",
    "person-classes",
    "alignment",
    "max-dt",
];

/// Settings under construction; paths stay optional until [`Settings::finish`].
#[derive(Debug, Clone)]
pub struct Settings {
    pub dataset: Option<PathBuf>,
    pub masks: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub filtering: bool,
    pub filter: FilterConfig,
    pub intrinsics: Option<CameraIntrinsics>,
    pub detector: DetectorParams,
    pub person_classes: Vec<String>,
    pub alignment: AlignmentKind,
    pub max_dt: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            dataset: None,
            masks: None,
            out: None,
            filtering: true,
            filter: FilterConfig::default(),
            intrinsics: None,
            detector: DetectorParams::default(),
            person_classes: vec!["person".to_string()],
            alignment: AlignmentKind::Sim3,
            max_dt: DEFAULT_MAX_TIME_DIFFERENCE,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.trim().parse().map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

pub fn parse_switch(key: &str, value: &str) -> Result<bool, String> {
    match value.trim().to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(format!("`{key}` expects on or off, got `{value}`")),
    }
}

pub fn parse_alignment(value: &str) -> Result<AlignmentKind, String> {
    match value.trim().to_ascii_lowercase().as_str() {
        "sim3" => Ok(AlignmentKind::Sim3),
        "se3" => Ok(AlignmentKind::Se3),
        "none" => Ok(AlignmentKind::None),
        _ => Err(format!("alignment must be sim3, se3 or none, got `{value}`")),
    }
}

/// `fx fy cx cy`, separated by spaces or commas.
pub fn parse_intrinsics(value: &str) -> Result<CameraIntrinsics, String> {
    let v: Vec<f64> = value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse("intrinsics", s))
        .collect::<Result<_, _>>()?;
    if v.len() != 4 {
        return Err(format!("intrinsics need 4 numbers (fx fy cx cy), got {}", v.len()));
    }
    CameraIntrinsics::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let f = &mut self.filter;
        match key {
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "masks" => self.masks = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "filtering" => self.filtering = parse_switch(key, value)?,
            "threshold" => f.epipolar_threshold = parse(key, value)?,
            "people" => f.flags.people = parse_switch(key, value)?,
            "things" => f.flags.things = parse_switch(key, value)?,
            "unknown" => f.flags.unknown = parse_switch(key, value)?,
            "check-stuff" => f.check_stuff = parse_switch(key, value)?,
            "iou-threshold" => f.iou_threshold = parse(key, value)?,
            "ransac-iterations" => f.ransac.iterations = parse(key, value)?,
            "ransac-threshold" => f.ransac.inlier_threshold = parse(key, value)?,
            "ransac-min-inliers" => f.ransac.min_inliers = Some(parse(key, value)?),
            "seed" => f.ransac.seed = parse(key, value)?,
            "max-hamming" => f.matching.max_distance = parse(key, value)?,
            "cross-check" => f.matching.cross_check = parse_switch(key, value)?,
            "intrinsics" => self.intrinsics = Some(parse_intrinsics(value)?),
            "n-features" => self.detector.n_features = parse(key, value)?,
            "levels" => self.detector.n_levels = parse(key, value)?,
            "scale-factor" => self.detector.scale_factor = parse(key, value)?,
            "fast-threshold" => self.detector.fast_threshold = parse(key, value)?,
            "person-classes" => {
                self.person_classes =
                    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
            }
            "alignment" => self.alignment = parse_alignment(value)?,
            "max-dt" => self.max_dt = parse(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Applies a config file. Blank lines and `#` comments are skipped.
    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("{}:{}: expected `key = value`", path.display(), i + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|m| CliError::usage(format!("{}:{}: {m}", path.display(), i + 1)))?;
        }
        Ok(())
    }

    /// Applies `key=value` tokens such as `people=on`.
    pub fn apply_pairs<S: AsRef<str>>(&mut self, pairs: &[S]) -> Result<(), CliError> {
        for p in pairs {
            let p = p.as_ref();
            let (key, value) =
                p.split_once('=').ok_or_else(|| CliError::usage(format!("expected key=value, got `{p}`")))?;
            self.set(key.trim(), value).map_err(CliError::usage)?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<RunConfig, CliError> {
        let f = &self.filter;
        let check = |ok: bool, m: &str| if ok { Ok(()) } else { Err(CliError::usage(m)) };
        check(f.epipolar_threshold > 0.0 && f.epipolar_threshold.is_finite(), "threshold must be positive")?;
        check(f.ransac.inlier_threshold > 0.0, "ransac-threshold must be positive")?;
        check(f.ransac.iterations > 0, "ransac-iterations must be positive")?;
        check((0.0..=1.0).contains(&f.iou_threshold), "iou-threshold must lie in [0, 1]")?;
        check(self.max_dt >= 0.0, "max-dt must not be negative")?;
        check(self.detector.scale_factor > 1.0, "scale-factor must exceed 1")?;
        check(self.detector.n_levels > 0, "levels must be positive")?;
        Ok(RunConfig {
            dataset: self.dataset.ok_or_else(|| CliError::usage("no dataset given (--dataset)"))?,
            masks: self.masks,
            out: self.out.ok_or_else(|| CliError::usage("no output directory given (--out)"))?,
            filtering: self.filtering,
            filter: self.filter,
            intrinsics: self.intrinsics,
            detector: self.detector,
            person_classes: self.person_classes,
            alignment: self.alignment,
            max_dt: self.max_dt,
        })
    }
}
