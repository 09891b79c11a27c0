//! Two-view epipolar geometry: homogeneous points, epipolar lines, point-to-line
//! distances and fundamental / essential matrix estimation.
//!
//! Conventions: a [`Correspondence`] holds a point `first` in the earlier image
//! and its match `second` in the later image. A fundamental matrix `F` maps a
//! first-image point to its epipolar line in the second image, so that
//! `second^T F first = 0` for a static scene point.

use nalgebra::{DMatrix, Matrix2, Matrix3, Rotation3, Unit, Vector2, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative threshold on singular values below which a matrix is treated as
/// rank-deficient.
const RANK_TOLERANCE: f64 = 1e-9;

/// Relative threshold on the 8th singular value of the normalized design
/// matrix. Below it the linear system has a null space of dimension > 1.
const DESIGN_RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("epipolar line is degenerate: both direction coefficients are zero")]
    DegenerateLine,
    #[error("need at least 8 correspondences, got {0}")]
    InsufficientMatches(usize),
    #[error("correspondences are in a degenerate configuration")]
    DegenerateConfiguration,
    #[error("no consensus: best model has {best} inliers, {required} required")]
    NoConsensus { best: usize, required: usize },
    #[error("matrix is not rank 2 (singular values {0:?})")]
    RankNotTwo([f64; 3]),
    #[error("essential matrix is degenerate")]
    DegenerateEssential,
    #[error("cheirality vote is ambiguous: best candidate has {best} of {total} points in front")]
    CheiralityAmbiguous { best: usize, total: usize },
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("non-finite input")]
    NonFinite,
}

/// Pixel coordinates: `u` is the column, `v` the row.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    pub fn to_homogeneous(self) -> HomogeneousPoint {
        to_homogeneous(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousPoint(pub Vector3<f64>);

impl HomogeneousPoint {
    pub fn x(&self) -> f64 {
        self.0.x
    }
    pub fn y(&self) -> f64 {
        self.0.y
    }
    pub fn w(&self) -> f64 {
        self.0.z
    }
}

pub fn to_homogeneous(p: PixelPoint) -> HomogeneousPoint {
    HomogeneousPoint(Vector3::new(p.u, p.v, 1.0))
}

/// Image line `a*u + b*v + c = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpipolarLine(pub Vector3<f64>);

impl EpipolarLine {
    pub fn a(&self) -> f64 {
        self.0.x
    }
    pub fn b(&self) -> f64 {
        self.0.y
    }
    pub fn c(&self) -> f64 {
        self.0.z
    }

    /// Unsigned point-to-line distance in pixels.
    pub fn distance_to(&self, p: PixelPoint) -> f64 {
        let num = self.0.dot(&to_homogeneous(p).0);
        num.abs() / self.a().hypot(self.b())
    }
}

/// A pair of matched pixels, `first` in the earlier image and `second` in the later one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub first: PixelPoint,
    pub second: PixelPoint,
}

impl Correspondence {
    pub const fn new(first: PixelPoint, second: PixelPoint) -> Self {
        Self { first, second }
    }
}

/// A rank-2, unit-Frobenius-norm fundamental matrix, together with the inlier
/// bookkeeping of the estimation that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalMatrix {
    matrix: Matrix3<f64>,
    inlier_mask: Vec<bool>,
    inlier_count: usize,
}

impl FundamentalMatrix {
    /// Wraps a matrix that is already rank 2. Fails for full-rank, rank-1 and
    /// zero matrices. The result is rescaled to unit Frobenius norm.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let s = sorted_singular_values(&m);
        if !(s[0] > 0.0) || s[2] > RANK_TOLERANCE * s[0] || s[1] <= RANK_TOLERANCE * s[0] {
            return Err(GeometryError::RankNotTwo(s));
        }
        Ok(Self {
            matrix: m / m.norm(),
            inlier_mask: Vec::new(),
            inlier_count: 0,
        })
    }

    /// Projects an arbitrary matrix onto the closest rank-2 matrix by zeroing
    /// its smallest singular value, then wraps it.
    pub fn enforce_rank2(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        Self::from_matrix(truncate_rank2(&m)?)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn inlier_mask(&self) -> &[bool] {
        &self.inlier_mask
    }

    pub fn inlier_count(&self) -> usize {
        self.inlier_count
    }

    pub fn with_inliers(mut self, mask: Vec<bool>) -> Self {
        self.inlier_count = mask.iter().filter(|&&b| b).count();
        self.inlier_mask = mask;
        self
    }

    pub fn line(&self, p: PixelPoint) -> Result<EpipolarLine, GeometryError> {
        epipolar_line(self, p)
    }

    pub fn distance(&self, first: PixelPoint, second: PixelPoint) -> Result<f64, GeometryError> {
        epipolar_distance(self, first, second)
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(GeometryError::InvalidIntrinsics("non-finite principal point".into()));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Back-projects a pixel to a normalized image ray `(x, y, 1)`.
    pub fn unproject(&self, p: PixelPoint) -> Vector3<f64> {
        Vector3::new((p.u - self.cx) / self.fx, (p.v - self.cy) / self.fy, 1.0)
    }
}

/// Motion of the second camera relative to the first: `x2 = R x1 + t`, with
/// `t` known only up to scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativePose {
    pub rotation: Rotation3<f64>,
    pub translation: Unit<Vector3<f64>>,
}

pub fn epipolar_line(f: &FundamentalMatrix, p1: PixelPoint) -> Result<EpipolarLine, GeometryError> {
    line_from_matrix(f.matrix(), p1)
}

/// `L = F * P1` for an unvalidated matrix.
pub fn line_from_matrix(f: &Matrix3<f64>, p1: PixelPoint) -> Result<EpipolarLine, GeometryError> {
    let l = f * to_homogeneous(p1).0;
    if !l.iter().all(|x| x.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    if l.x == 0.0 && l.y == 0.0 {
        return Err(GeometryError::DegenerateLine);
    }
    Ok(EpipolarLine(l))
}

/// Distance in pixels from `p2` to the epipolar line of `p1`.
pub fn epipolar_distance(
    f: &FundamentalMatrix,
    p1: PixelPoint,
    p2: PixelPoint,
) -> Result<f64, GeometryError> {
    distance_from_matrix(f.matrix(), p1, p2)
}

/// Same as [`epipolar_distance`] for any 3x3 matrix. Invariant to scaling of `f`.
pub fn distance_from_matrix(
    f: &Matrix3<f64>,
    p1: PixelPoint,
    p2: PixelPoint,
) -> Result<f64, GeometryError> {
    Ok(line_from_matrix(f, p1)?.distance_to(p2))
}

fn sorted_singular_values(m: &Matrix3<f64>) -> [f64; 3] {
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    [s[0], s[1], s[2]]
}

fn truncate_rank2(m: &Matrix3<f64>) -> Result<Matrix3<f64>, GeometryError> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(GeometryError::DegenerateConfiguration),
    };
    let mut s = svd.singular_values;
    let min_idx = s.imin();
    s[min_idx] = 0.0;
    Ok(u * Matrix3::from_diagonal(&s) * v_t)
}

/// Similarity that moves the centroid to the origin and scales the mean
/// distance from it to sqrt(2).
fn normalizing_transform<'a>(
    points: impl Iterator<Item = &'a PixelPoint> + Clone,
) -> Result<Matrix3<f64>, GeometryError> {
    let mut n = 0usize;
    let (mut su, mut sv) = (0.0, 0.0);
    for p in points.clone() {
        su += p.u;
        sv += p.v;
        n += 1;
    }
    let (mu, mv) = (su / n as f64, sv / n as f64);
    let mean_dist = points.map(|p| (p.u - mu).hypot(p.v - mv)).sum::<f64>() / n as f64;
    if !(mean_dist > 0.0) || !mean_dist.is_finite() {
        return Err(GeometryError::DegenerateConfiguration);
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(s, 0.0, -s * mu, 0.0, s, -s * mv, 0.0, 0.0, 1.0))
}

/// Hartley-normalized linear 8-point estimate over all given correspondences.
pub fn estimate_fundamental_8pt(
    pairs: &[Correspondence],
) -> Result<FundamentalMatrix, GeometryError> {
    let n = pairs.len();
    if n < 8 {
        return Err(GeometryError::InsufficientMatches(n));
    }
    if pairs.iter().any(|c| !c.first.is_finite() || !c.second.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let t1 = normalizing_transform(pairs.iter().map(|c| &c.first))?;
    let t2 = normalizing_transform(pairs.iter().map(|c| &c.second))?;

    // Padding to 9 rows keeps the right singular vectors complete.
    let rows = n.max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, c) in pairs.iter().enumerate() {
        let x1 = t1 * to_homogeneous(c.first).0;
        let x2 = t2 * to_homogeneous(c.second).0;
        let (x, y) = (x1.x, x1.y);
        let (xp, yp) = (x2.x, x2.y);
        let row = [xp * x, xp * y, xp, yp * x, yp * y, yp, x, y, 1.0];
        for (j, value) in row.into_iter().enumerate() {
            a[(i, j)] = value;
        }
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(GeometryError::DegenerateConfiguration)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s_max = svd.singular_values[order[0]];
    let s_8 = svd.singular_values[order[7]];
    if !(s_max > 0.0) || s_8 <= DESIGN_RANK_TOLERANCE * s_max {
        return Err(GeometryError::DegenerateConfiguration);
    }
    let null = v_t.row(order[8]);
    let f_norm = Matrix3::from_row_slice(&null.iter().copied().collect::<Vec<_>>());
    let f_norm = truncate_rank2(&f_norm)?;
    let f = t2.transpose() * f_norm * t1;
    Ok(FundamentalMatrix::enforce_rank2(f)?.with_inliers(vec![true; n]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    pub iterations: usize,
    /// Maximum epipolar distance (px) for a correspondence to count as inlier.
    pub inlier_threshold: f64,
    /// `None` selects `max(15, 30% of the correspondences)`.
    pub min_inliers: Option<usize>,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 500,
            inlier_threshold: 1.0,
            min_inliers: None,
            seed: 0,
        }
    }
}

impl RansacParams {
    pub fn required_inliers(&self, n: usize) -> usize {
        self.min_inliers
            .unwrap_or_else(|| 15usize.max((0.3 * n as f64).ceil() as usize))
    }
}

fn inlier_mask(f: &Matrix3<f64>, pairs: &[Correspondence], threshold: f64) -> Vec<bool> {
    pairs
        .iter()
        .map(|c| matches!(distance_from_matrix(f, c.first, c.second), Ok(d) if d < threshold))
        .collect()
}

/// RANSAC over minimal 8-point samples. Each new best model is refit on its
/// consensus set for as long as that grows the set.
///
/// Sampling uses a private ChaCha8 generator seeded from `params.seed`, so the
/// result is bit-reproducible for a given input order.
pub fn estimate_fundamental_ransac(
    pairs: &[Correspondence],
    params: &RansacParams,
) -> Result<FundamentalMatrix, GeometryError> {
    let n = pairs.len();
    if n < 8 {
        return Err(GeometryError::InsufficientMatches(n));
    }
    let required = params.required_inliers(n);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(usize, FundamentalMatrix)> = None;
    let mut sample_buf = Vec::with_capacity(8);

    for _ in 0..params.iterations {
        sample_buf.clear();
        sample_buf.extend(sample(&mut rng, n, 8).iter().map(|i| pairs[i]));
        let Ok(model) = estimate_fundamental_8pt(&sample_buf) else {
            continue;
        };
        let count = pairs
            .iter()
            .filter(|c| {
                matches!(model.distance(c.first, c.second), Ok(d) if d < params.inlier_threshold)
            })
            .count();
        if best.as_ref().map_or(true, |(b, _)| count > *b) {
            let (count, model) = refine(pairs, params.inlier_threshold, count, model);
            best = Some((count, model));
            if count == n {
                break;
            }
        }
    }

    let (best_count, best_model) = match best {
        Some(b) if b.0 >= required => b,
        Some((count, _)) => return Err(GeometryError::NoConsensus { best: count, required }),
        None => return Err(GeometryError::NoConsensus { best: 0, required }),
    };
    let mask = inlier_mask(best_model.matrix(), pairs, params.inlier_threshold);
    debug_assert_eq!(mask.iter().filter(|&&b| b).count(), best_count);
    Ok(best_model.with_inliers(mask))
}

const MAX_REFINEMENTS: usize = 10;

/// Refits on the consensus set while that grows the set.
fn refine(
    pairs: &[Correspondence],
    threshold: f64,
    mut count: usize,
    mut model: FundamentalMatrix,
) -> (usize, FundamentalMatrix) {
    for _ in 0..MAX_REFINEMENTS {
        let mask = inlier_mask(model.matrix(), pairs, threshold);
        let inliers: Vec<Correspondence> =
            pairs.iter().zip(&mask).filter_map(|(c, &m)| m.then_some(*c)).collect();
        let Ok(refit) = estimate_fundamental_8pt(&inliers) else {
            break;
        };
        let refit_count = inlier_mask(refit.matrix(), pairs, threshold).iter().filter(|&&b| b).count();
        if refit_count <= count {
            break;
        }
        count = refit_count;
        model = refit;
    }
    (count, model)
}

/// `E = K^T F K`, with its singular values projected onto `(s, s, 0)`.
pub fn essential_from_fundamental(
    f: &Matrix3<f64>,
    k: &CameraIntrinsics,
) -> Result<Matrix3<f64>, GeometryError> {
    k.validate()?;
    let km = k.matrix();
    let e = km.transpose() * f * km;
    if e.iter().any(|x| !x.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let svd = e.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(GeometryError::DegenerateEssential),
    };
    let mut s = svd.singular_values;
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    if !(s[idx[0]] > 0.0) || s[idx[1]] <= RANK_TOLERANCE * s[idx[0]] {
        return Err(GeometryError::DegenerateEssential);
    }
    let mean = 0.5 * (s[idx[0]] + s[idx[1]]);
    s[idx[0]] = mean;
    s[idx[1]] = mean;
    s[idx[2]] = 0.0;
    Ok(u * Matrix3::from_diagonal(&s) * v_t)
}

/// Depths `(d1, d2)` along the two rays such that `d2 * x2 ~= d1 * R x1 + t`,
/// in the least-squares sense.
fn ray_depths(
    rotation: &Matrix3<f64>,
    translation: &Vector3<f64>,
    x1: &Vector3<f64>,
    x2: &Vector3<f64>,
) -> Option<(f64, f64)> {
    let r1 = rotation * x1;
    // [r1, -x2] [d1; d2] = -t
    let ata = Matrix2::new(r1.dot(&r1), -r1.dot(x2), -r1.dot(x2), x2.dot(x2));
    let atb = Vector2::new(-r1.dot(translation), x2.dot(translation));
    let sol = ata.try_inverse()? * atb;
    (sol.x.is_finite() && sol.y.is_finite()).then_some((sol.x, sol.y))
}

/// Decomposes `E` into its four `(R, t)` candidates and keeps the one with the
/// most correspondences triangulating in front of both cameras.
///
/// Candidate order is `(R1, t), (R1, -t), (R2, t), (R2, -t)`; ties go to the
/// earlier candidate.
pub fn recover_relative_pose(
    e: &Matrix3<f64>,
    pairs: &[Correspondence],
    k: &CameraIntrinsics,
) -> Result<RelativePose, GeometryError> {
    if pairs.is_empty() {
        return Err(GeometryError::InsufficientMatches(0));
    }
    k.validate()?;
    if e.iter().any(|x| !x.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let s = sorted_singular_values(e);
    if !(s[0] > 1e-12) || s[1] <= RANK_TOLERANCE * s[0] {
        return Err(GeometryError::DegenerateEssential);
    }
    let svd = e.svd(true, true);
    let (mut u, mut v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(GeometryError::DegenerateEssential),
    };
    // Null vector of E^T (the translation direction) is the column of U that
    // pairs with the smallest singular value.
    let null_idx = svd.singular_values.imin();
    if null_idx != 2 {
        u.swap_columns(null_idx, 2);
        v_t.swap_rows(null_idx, 2);
    }
    if u.determinant() < 0.0 {
        u = -u;
    }
    if v_t.determinant() < 0.0 {
        v_t = -v_t;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = u * w * v_t;
    let r2 = u * w.transpose() * v_t;
    let t: Vector3<f64> = u.column(2).into_owned();
    let candidates = [(r1, t), (r1, -t), (r2, t), (r2, -t)];

    let rays: Vec<(Vector3<f64>, Vector3<f64>)> = pairs
        .iter()
        .map(|c| (k.unproject(c.first), k.unproject(c.second)))
        .collect();

    let mut best: Option<(usize, usize)> = None;
    for (ci, (r, t)) in candidates.iter().enumerate() {
        let votes = rays
            .iter()
            .filter(|(x1, x2)| matches!(ray_depths(r, t, x1, x2), Some((d1, d2)) if d1 > 0.0 && d2 > 0.0))
            .count();
        if best.map_or(true, |(b, _)| votes > b) {
            best = Some((votes, ci));
        }
    }
    let (votes, ci) = best.unwrap_or((0, 0));
    if votes * 2 < pairs.len() || votes == 0 {
        return Err(GeometryError::CheiralityAmbiguous {
            best: votes,
            total: pairs.len(),
        });
    }
    let (r, t) = candidates[ci];
    Ok(RelativePose {
        rotation: Rotation3::from_matrix(&r),
        translation: Unit::new_normalize(t),
    })
}
