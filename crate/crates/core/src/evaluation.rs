//! Trajectory I/O in TUM format, timestamp association, Umeyama alignment,
//! absolute trajectory error and keypoint classification metrics.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::odometry::{PoseSE3, Trajectory};

pub const DEFAULT_MAX_TIME_DIFFERENCE: f64 = 0.02;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no timestamps could be associated between the trajectories")]
    NoOverlap,
    #[error("length mismatch: {0} predictions, {1} labels")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parses `timestamp tx ty tz qx qy qz qw` lines; `#` lines are comments.
pub fn parse_tum(text: &str) -> Result<Trajectory, EvalError> {
    let mut trajectory = Trajectory::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let values: Vec<f64> = trimmed
            .split_whitespace()
            .map(|f| f.parse::<f64>().map_err(|_| EvalError::Parse { line, message: format!("invalid number `{f}`") }))
            .collect::<Result<_, _>>()?;
        if values.len() != 8 {
            return Err(EvalError::Parse { line, message: format!("expected 8 fields, found {}", values.len()) });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::Parse { line, message: "non-finite value".into() });
        }
        let q = Quaternion::new(values[7], values[4], values[5], values[6]);
        if q.norm() < 1e-12 {
            return Err(EvalError::Parse { line, message: "zero quaternion".into() });
        }
        let pose = PoseSE3 {
            timestamp: values[0],
            translation: Vector3::new(values[1], values[2], values[3]),
            rotation: UnitQuaternion::from_quaternion(q),
        };
        trajectory
            .push(pose)
            .map_err(|e| EvalError::Parse { line, message: e.to_string() })?;
    }
    Ok(trajectory)
}

pub fn read_tum(path: &Path) -> Result<Trajectory, EvalError> {
    parse_tum(&fs::read_to_string(path)?)
}

/// Shortest round-trip formatting of every value.
pub fn format_tum(trajectory: &Trajectory) -> String {
    let mut out = String::new();
    for p in trajectory {
        let (t, q) = (p.translation, p.rotation.quaternion());
        writeln!(out, "{} {} {} {} {} {} {} {}", p.timestamp, t.x, t.y, t.z, q.i, q.j, q.k, q.w).unwrap();
    }
    out
}

pub fn write_tum(path: &Path, trajectory: &Trajectory) -> Result<(), EvalError> {
    fs::write(path, format_tum(trajectory))?;
    Ok(())
}

/// Pairs `(estimate index, ground-truth index)` whose timestamps differ by at
/// most `max_dt`. Closest pairs are taken first and each pose is used once.
/// The result is ordered by estimate index.
pub fn associate_timestamps(
    estimate: &Trajectory,
    ground_truth: &Trajectory,
    max_dt: f64,
) -> Result<Vec<(usize, usize)>, EvalError> {
    let gt = ground_truth.poses();
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in estimate.iter().enumerate() {
        // Timestamps are sorted, so only a window of ground truth is relevant.
        let start = gt.partition_point(|g| g.timestamp < p.timestamp - max_dt);
        for (j, g) in gt.iter().enumerate().skip(start) {
            let dt = (g.timestamp - p.timestamp).abs();
            if g.timestamp > p.timestamp + max_dt {
                break;
            }
            if dt <= max_dt {
                candidates.push((dt, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut used_est = vec![false; estimate.len()];
    let mut used_gt = vec![false; gt.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_est[i] && !used_gt[j] {
            used_est[i] = true;
            used_gt[j] = true;
            pairs.push((i, j));
        }
    }
    if pairs.is_empty() {
        return Err(EvalError::NoOverlap);
    }
    pairs.sort_unstable();
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignmentKind {
    /// Raw poses, no alignment.
    None,
    Se3,
    Sim3,
}

/// `y ~= scale * rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
    /// Set when the source points do not span a plane, so the rotation is not
    /// unique (for example a straight-line trajectory).
    pub degenerate: bool,
}

impl Alignment {
    pub fn identity() -> Self {
        Self { rotation: Rotation3::identity(), translation: Vector3::zeros(), scale: 1.0, degenerate: false }
    }

    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * x) + self.translation
    }
}

/// Least-squares similarity (or rigid, without scale) transform mapping
/// `source` onto `target`.
pub fn umeyama(source: &[Vector3<f64>], target: &[Vector3<f64>], with_scale: bool) -> Alignment {
    assert_eq!(source.len(), target.len(), "point sets must pair up");
    let n = source.len();
    if n == 0 {
        return Alignment { degenerate: true, ..Alignment::identity() };
    }
    let nf = n as f64;
    let mu_x = source.iter().sum::<Vector3<f64>>() / nf;
    let mu_y = target.iter().sum::<Vector3<f64>>() / nf;
    let mut cov = Matrix3::zeros();
    let mut var_x = 0.0;
    for (x, y) in source.iter().zip(target) {
        let (dx, dy) = (x - mu_x, y - mu_y);
        cov += dy * dx.transpose();
        var_x += dx.norm_squared();
    }
    cov /= nf;
    var_x /= nf;

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let d = svd.singular_values;
    let mut s = Vector3::new(1.0, 1.0, 1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        // Flip the axis with the smallest singular value.
        s[d.imin()] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&s) * v_t;
    let mut sorted = [d[0], d[1], d[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    let degenerate = !(sorted[0] > 0.0) || sorted[1] <= 1e-12 * sorted[0];

    let scale = if with_scale && var_x > 0.0 { d.component_mul(&s).sum() / var_x } else { 1.0 };
    let rotation = Rotation3::from_matrix_unchecked(rotation);
    let translation = mu_y - scale * (rotation * mu_x);
    Alignment { rotation, translation, scale, degenerate }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AteResult {
    pub rmse: f64,
    pub pairs: usize,
    pub alignment: Alignment,
    /// `(estimate timestamp, translational error)` per associated pose.
    pub residuals: Vec<(f64, f64)>,
}

/// Absolute trajectory error: RMSE of translational differences after
/// associating timestamps and aligning the estimate onto the ground truth.
pub fn ate_rmse(
    estimate: &Trajectory,
    ground_truth: &Trajectory,
    kind: AlignmentKind,
    max_dt: f64,
) -> Result<AteResult, EvalError> {
    let pairs = associate_timestamps(estimate, ground_truth, max_dt)?;
    let est: Vec<Vector3<f64>> = pairs.iter().map(|&(i, _)| estimate.poses()[i].translation).collect();
    let gt: Vec<Vector3<f64>> = pairs.iter().map(|&(_, j)| ground_truth.poses()[j].translation).collect();
    let alignment = match kind {
        AlignmentKind::None => Alignment::identity(),
        AlignmentKind::Se3 => umeyama(&est, &gt, false),
        AlignmentKind::Sim3 => umeyama(&est, &gt, true),
    };
    if alignment.degenerate {
        log::warn!("trajectory alignment is degenerate; rotation is not unique");
    }
    let residuals: Vec<(f64, f64)> = pairs
        .iter()
        .zip(est.iter().zip(&gt))
        .map(|(&(i, _), (x, y))| (estimate.poses()[i].timestamp, (alignment.apply(x) - y).norm()))
        .collect();
    let rmse = (residuals.iter().map(|(_, e)| e * e).sum::<f64>() / residuals.len() as f64).sqrt();
    Ok(AteResult { rmse, pairs: pairs.len(), alignment, residuals })
}

pub fn format_residuals_csv(residuals: &[(f64, f64)]) -> String {
    let mut out = String::from("timestamp,residual\n");
    for (t, e) in residuals {
        writeln!(out, "{t},{e}").unwrap();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Precision and recall of "dynamic" predictions. With no positive
/// predictions precision is 1; with no positive labels recall is 1.
pub fn classification_metrics(predicted: &[bool], truth: &[bool]) -> Result<ClassificationMetrics, EvalError> {
    if predicted.len() != truth.len() {
        return Err(EvalError::LengthMismatch(predicted.len(), truth.len()));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    Ok(ClassificationMetrics {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSummary {
    /// Row-major rotation matrix.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub scale: f64,
    pub degenerate: bool,
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub ate_rmse: f64,
    pub n_pairs: usize,
    pub mode: AlignmentKind,
    pub alignment: AlignmentSummary,
}

impl EvalMetrics {
    pub fn new(result: &AteResult, mode: AlignmentKind) -> Self {
        let a = &result.alignment;
        let r = a.rotation.matrix();
        Self {
            ate_rmse: result.rmse,
            n_pairs: result.pairs,
            mode,
            alignment: AlignmentSummary {
                rotation: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
                translation: [a.translation.x, a.translation.y, a.translation.z],
                scale: a.scale,
                degenerate: a.degenerate,
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

/// Published ATE RMSE figures (m) of a complete SLAM system built around
/// this kind of filtering, on public RGB-D benchmarks. Reproducing them needs
/// learned panoptic segmentation and a full SLAM back end, so they are kept
/// for comparison only and nothing here recomputes them.
pub mod reference {
    pub const TUM_FR3_WALKING_STATIC: f64 = 0.009;
    pub const TUM_FR3_WALKING_XYZ: f64 = 0.014;
    pub const BONN_NON_OBSTRUCTING_BOX: f64 = 0.027;
    /// Same sequence with no dynamic filtering.
    pub const BONN_NON_OBSTRUCTING_BOX_UNFILTERED: f64 = 0.347;
    /// Same sequence, one entry per filter configuration.
    pub const BONN_NON_OBSTRUCTING_BOX_ABLATION: [(&str, f64); 4] =
        [("people", 0.481), ("people+things", 0.029), ("people+unknown", 0.302), ("all", 0.027)];
}
