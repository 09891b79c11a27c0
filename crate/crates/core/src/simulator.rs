//! Synthetic dynamic scenes at the feature level.
//!
//! A scene is a static background point cloud plus rigid moving objects,
//! observed by a pinhole camera along a parametric path. Every frame yields
//! keypoints with synthetic descriptors, a panoptic segmentation built from
//! projected convex hulls, and ground truth: camera poses, per-keypoint
//! dynamic flags and true correspondences.

use nalgebra::{Isometry3, Matrix3, Point3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Descriptor, FeatureFrame, Keypoint};
use crate::geometry::{CameraIntrinsics, FundamentalMatrix, GeometryError, PixelPoint};
use crate::odometry::{PoseSE3, Trajectory};
use crate::panoptic::{Bitmap, PanopticError, PanopticFrame, StuffRegion, ThingInstance};

/// The TUM / Kinect convention, 640x480.
pub const DEFAULT_INTRINSICS: CameraIntrinsics = CameraIntrinsics {
    fx: 525.0,
    fy: 525.0,
    cx: 319.5,
    cy: 239.5,
};

pub const PERSON_CLASS_ID: u32 = 1;
pub const BACKGROUND_SEGMENT_ID: u32 = 1000;
pub const BACKGROUND_CLASS_ID: u32 = 184;
const MAX_DESCRIPTOR_FLIPS: usize = 4;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scene config: {0}")]
    Config(String),
    #[error("poses differ only by rotation; the fundamental matrix is undefined")]
    PureRotation,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Panoptic(#[from] PanopticError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectLabel {
    Person,
    Thing { class_id: u32, class_name: String },
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingObject {
    pub n_points: usize,
    /// Centroid at t = 0, world frame (m).
    pub centroid: [f64; 3],
    /// Linear velocity (m/s), or peak velocity when oscillating.
    pub velocity: [f64; 3],
    /// Half-size of the box the object's points are drawn from (m).
    pub half_extent: [f64; 3],
    pub label: ObjectLabel,
    /// When set, the object moves back and forth along `velocity` with this
    /// period (s) instead of drifting.
    #[serde(default)]
    pub oscillation_period: Option<f64>,
}

impl MovingObject {
    pub fn is_moving(&self) -> bool {
        self.velocity.iter().any(|&v| v != 0.0)
    }

    pub fn offset_at(&self, t: f64) -> Vector3<f64> {
        let v = Vector3::from(self.velocity);
        match self.oscillation_period {
            Some(p) if p > 0.0 => {
                let w = std::f64::consts::TAU / p;
                v * ((w * t).sin() / w)
            }
            _ => v * t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CameraPath {
    /// Camera stays at the origin.
    Hold,
    /// Constant velocity (m/s), fixed orientation.
    Line { velocity: [f64; 3] },
    /// Orbit around the point `radius` metres ahead of the start pose, always
    /// looking at it. Positive `angular_velocity` (rad/s) yaws right.
    Arc { radius: f64, angular_velocity: f64 },
}

impl CameraPath {
    /// World-from-camera pose at time `t`.
    pub fn pose_at(&self, t: f64) -> Isometry3<f64> {
        match *self {
            CameraPath::Hold => Isometry3::identity(),
            CameraPath::Line { velocity } => {
                Isometry3::from_parts(Translation3::from(Vector3::from(velocity) * t), UnitQuaternion::identity())
            }
            CameraPath::Arc { radius, angular_velocity } => {
                let theta = angular_velocity * t;
                let center = Vector3::new(0.0, 0.0, radius);
                let position = center + radius * Vector3::new(-theta.sin(), 0.0, -theta.cos());
                let rotation = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), theta);
                Isometry3::from_parts(Translation3::from(position), rotation)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub n_background_points: usize,
    pub background_min: [f64; 3],
    pub background_max: [f64; 3],
    #[serde(default)]
    pub moving_objects: Vec<MovingObject>,
    pub camera_path: CameraPath,
    pub intrinsics: CameraIntrinsics,
    pub width: u32,
    pub height: u32,
    /// Standard deviation of the Gaussian pixel noise (px).
    pub noise_sigma: f64,
    pub frame_count: usize,
    pub frame_rate: f64,
    pub seed: u64,
}

impl SceneConfig {
    /// Static background only, orbiting camera.
    pub fn static_scene() -> Self {
        Self {
            n_background_points: 400,
            background_min: [-5.0, -2.5, 2.5],
            background_max: [5.0, 2.5, 10.0],
            moving_objects: Vec::new(),
            camera_path: CameraPath::Arc { radius: 5.0, angular_velocity: 0.1 },
            intrinsics: DEFAULT_INTRINSICS,
            width: 640,
            height: 480,
            noise_sigma: 0.0,
            frame_count: 30,
            frame_rate: 30.0,
            seed: 0,
        }
    }

    pub fn person() -> MovingObject {
        MovingObject {
            n_points: 60,
            centroid: [-0.8, 0.1, 3.5],
            velocity: [0.2, 0.0, -0.5],
            half_extent: [0.25, 0.85, 0.15],
            label: ObjectLabel::Person,
            oscillation_period: None,
        }
    }

    /// A cardboard box the segmentation model has no class for.
    pub fn unlabeled_box() -> MovingObject {
        MovingObject {
            n_points: 50,
            centroid: [0.9, 0.3, 3.0],
            velocity: [0.0, -0.6, 0.0],
            half_extent: [0.25, 0.2, 0.2],
            label: ObjectLabel::Unlabeled,
            oscillation_period: None,
        }
    }

    /// A recognised object class being carried around.
    pub fn labeled_thing() -> MovingObject {
        MovingObject {
            n_points: 50,
            centroid: [0.0, -0.6, 4.0],
            velocity: [0.0, 0.5, 0.3],
            half_extent: [0.3, 0.2, 0.2],
            label: ObjectLabel::Thing { class_id: 29, class_name: "suitcase".into() },
            oscillation_period: None,
        }
    }

    /// A person carrying an unlabeled box.
    pub fn person_and_box() -> Self {
        Self {
            moving_objects: vec![Self::person(), Self::unlabeled_box()],
            ..Self::static_scene()
        }
    }

    /// Person, unlabeled box and a moving labeled object.
    pub fn unknown_object_scene() -> Self {
        Self {
            moving_objects: vec![Self::person(), Self::unlabeled_box(), Self::labeled_thing()],
            ..Self::static_scene()
        }
    }

    /// The three objects of [`Self::unknown_object_scene`] moving back and
    /// forth, with mild pixel noise, over 60 frames.
    pub fn ablation_scene() -> Self {
        let mut cfg = Self { frame_count: 60, noise_sigma: 0.3, ..Self::unknown_object_scene() };
        for o in &mut cfg.moving_objects {
            o.oscillation_period = Some(2.0);
        }
        cfg
    }

    /// A long oscillating-object sequence (200 frames, 0.5 px noise).
    pub fn long_dynamic_scene() -> Self {
        Self { frame_count: 200, noise_sigma: 0.5, ..Self::ablation_scene() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let err = |m: &str| Err(SimError::Config(m.to_string()));
        if self.frame_count < 2 {
            return err("frame_count must be at least 2");
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return err("noise_sigma must be finite and non-negative");
        }
        if !(self.frame_rate > 0.0) || !self.frame_rate.is_finite() {
            return err("frame_rate must be positive");
        }
        if self.width == 0 || self.height == 0 || self.width > u16::MAX as u32 || self.height > u16::MAX as u32 {
            return err("image size out of range");
        }
        if self.intrinsics.validate().is_err() {
            return err("intrinsics must have positive focal lengths");
        }
        if (0..3).any(|i| !(self.background_min[i] <= self.background_max[i])) {
            return err("background_min must not exceed background_max");
        }
        if self.moving_objects.len() >= BACKGROUND_SEGMENT_ID as usize {
            return err("too many moving objects");
        }
        for o in &self.moving_objects {
            if o.half_extent.iter().any(|&e| !(e >= 0.0)) {
                return err("object half_extent must be non-negative");
            }
            if o.centroid.iter().chain(&o.velocity).any(|v| !v.is_finite()) {
                return err("object centroid and velocity must be finite");
            }
        }
        if let CameraPath::Arc { radius, angular_velocity } = self.camera_path {
            if !(radius > 0.0) || !angular_velocity.is_finite() {
                return err("arc radius must be positive");
            }
        }
        Ok(())
    }

    pub fn timestamp(&self, frame: usize) -> f64 {
        frame as f64 / self.frame_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Pixel(PixelPoint),
    Behind,
}

/// Pinhole projection of a world point through a world-from-camera pose.
pub fn project_point(k: &CameraIntrinsics, pose: &Isometry3<f64>, world: &Point3<f64>) -> Projection {
    let c = pose.inverse_transform_point(world);
    if c.z <= 0.0 {
        return Projection::Behind;
    }
    Projection::Pixel(PixelPoint::new(k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy))
}

fn skew(t: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0)
}

/// `F = K^-T [t]x R K^-1` for the motion from `pose_a` to `pose_b`
/// (both world-from-camera), so that `p_b^T F p_a = 0`.
pub fn ground_truth_fundamental(
    k: &CameraIntrinsics,
    pose_a: &Isometry3<f64>,
    pose_b: &Isometry3<f64>,
) -> Result<FundamentalMatrix, SimError> {
    let rel = pose_b.inverse() * pose_a;
    let t = rel.translation.vector;
    if t.norm() <= 1e-12 {
        return Err(SimError::PureRotation);
    }
    let r = rel.rotation.to_rotation_matrix().into_inner();
    let k_inv = k.inverse_matrix();
    let f = k_inv.transpose() * skew(&t) * r * k_inv;
    Ok(FundamentalMatrix::from_matrix(f)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFrame {
    pub features: FeatureFrame,
    pub panoptic: PanopticFrame,
    /// World-from-camera pose.
    pub pose: Isometry3<f64>,
    /// Scene point index of every keypoint. Background points come first, so
    /// an index below `n_background_points` is background.
    pub point_ids: Vec<usize>,
    /// Ground-truth motion flag of every keypoint.
    pub dynamic: Vec<bool>,
    /// `(previous keypoint index, current keypoint index)` pairs observing
    /// the same scene point; empty for the first frame.
    pub gt_matches: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub config: SceneConfig,
    pub frames: Vec<SyntheticFrame>,
    pub ground_truth: Trajectory,
}

/// Which scene element a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Owner {
    Background,
    Object(usize),
}

struct ScenePoint {
    owner: Owner,
    /// Body-frame position: world position for the background, offset from
    /// the centroid for object points.
    local: Vector3<f64>,
    descriptor: Descriptor,
}

struct Observation {
    point: usize,
    noisy: PixelPoint,
}

fn uniform_in_box(rng: &mut impl Rng, min: [f64; 3], max: [f64; 3]) -> Vector3<f64> {
    Vector3::from_fn(|i, _| {
        if min[i] == max[i] {
            min[i]
        } else {
            rng.random_range(min[i]..max[i])
        }
    })
}

/// Andrew's monotone chain; counter-clockwise in image coordinates, without
/// collinear points.
fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Pixels whose centres lie inside (or on) the convex polygon.
fn rasterize_hull(hull: &[(f64, f64)], width: u32, height: u32, mut visit: impl FnMut(u32, u32)) {
    if hull.len() < 3 {
        return;
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &(x, y) in hull {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let clamp_px = |v: f64, hi: u32| v.floor().clamp(0.0, hi as f64 - 1.0) as u32;
    if x1 < 0.0 || y1 < 0.0 || x0 >= width as f64 || y0 >= height as f64 {
        return;
    }
    for py in clamp_px(y0, height)..=clamp_px(y1, height) {
        for px in clamp_px(x0, width)..=clamp_px(x1, width) {
            let c = (px as f64 + 0.5, py as f64 + 0.5);
            let inside = hull.iter().zip(hull.iter().cycle().skip(1)).all(|(a, b)| {
                (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0) >= 0.0
            });
            if inside {
                visit(px, py);
            }
        }
    }
}

struct Scene<'a> {
    config: &'a SceneConfig,
    points: Vec<ScenePoint>,
}

impl Scene<'_> {
    fn world_position(&self, p: &ScenePoint, t: f64) -> Point3<f64> {
        match p.owner {
            Owner::Background => Point3::from(p.local),
            Owner::Object(i) => {
                let o = &self.config.moving_objects[i];
                Point3::from(Vector3::from(o.centroid) + o.offset_at(t) + p.local)
            }
        }
    }

    fn is_dynamic(&self, p: &ScenePoint) -> bool {
        match p.owner {
            Owner::Background => false,
            Owner::Object(i) => self.config.moving_objects[i].is_moving(),
        }
    }

    fn frame(&self, index: usize) -> Result<(FeatureFrame, PanopticFrame, Isometry3<f64>, Vec<usize>, Vec<bool>), SimError> {
        let cfg = self.config;
        let (w, h) = (cfg.width, cfg.height);
        let t = cfg.timestamp(index);
        let pose = cfg.camera_path.pose_at(t);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(index as u64 + 1);
        let noise = (cfg.noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.noise_sigma).expect("valid sigma"));

        let n_obj = cfg.moving_objects.len();
        let mut hull_input: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n_obj];
        let mut observations: Vec<Observation> = Vec::new();
        for (pi, p) in self.points.iter().enumerate() {
            let Projection::Pixel(clean) = project_point(&cfg.intrinsics, &pose, &self.world_position(p, t)) else {
                continue;
            };
            if let Owner::Object(oi) = p.owner {
                hull_input[oi].push((clean.u, clean.v));
            }
            let noisy = match &noise {
                Some(n) => PixelPoint::new(clean.u + n.sample(&mut rng), clean.v + n.sample(&mut rng)),
                None => clean,
            };
            if noisy.u >= 0.0 && noisy.v >= 0.0 && noisy.u < w as f64 && noisy.v < h as f64 {
                observations.push(Observation { point: pi, noisy });
            }
        }

        // Paint silhouettes far to near so nearer objects own shared pixels.
        let mut depth_order: Vec<(f64, usize)> = cfg
            .moving_objects
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let c = Point3::from(Vector3::from(o.centroid) + o.offset_at(t));
                (pose.inverse_transform_point(&c).z, i)
            })
            .filter(|(z, _)| *z > 0.0)
            .collect();
        depth_order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        let mut owner: Vec<Option<usize>> = vec![None; (w * h) as usize];
        for &(_, oi) in &depth_order {
            let hull = convex_hull(&hull_input[oi]);
            rasterize_hull(&hull, w, h, |x, y| owner[(y * w + x) as usize] = Some(oi));
            for o in &observations {
                if self.points[o.point].owner == Owner::Object(oi) {
                    let (x, y) = (o.noisy.u as u32, o.noisy.v as u32);
                    owner[(y * w + x) as usize] = Some(oi);
                }
            }
        }

        let mut features = FeatureFrame::new(index as u64, t);
        let mut point_ids = Vec::new();
        let mut dynamic = Vec::new();
        for o in &observations {
            let p = &self.points[o.point];
            let (x, y) = (o.noisy.u as u32, o.noisy.v as u32);
            let visible = match (p.owner, owner[(y * w + x) as usize]) {
                (Owner::Background, None) => true,
                (Owner::Object(a), Some(b)) => a == b,
                _ => false,
            };
            if !visible {
                continue;
            }
            let mut descriptor = p.descriptor;
            if noise.is_some() {
                for _ in 0..rng.random_range(0..=MAX_DESCRIPTOR_FLIPS) {
                    descriptor.flip_bit(rng.random_range(0..Descriptor::BITS));
                }
            }
            features.push(
                Keypoint { position: o.noisy, octave: 0, angle: 0.0, response: 1.0 },
                descriptor,
            );
            point_ids.push(o.point);
            dynamic.push(self.is_dynamic(p));
        }

        let mut masks: Vec<Bitmap> = vec![Bitmap::new(w, h); n_obj];
        let mut background = Bitmap::new(w, h);
        for y in 0..h {
            for x in 0..w {
                match owner[(y * w + x) as usize] {
                    Some(oi) => masks[oi].set(x, y, true),
                    None => background.set(x, y, true),
                }
            }
        }
        let mut things = Vec::new();
        for (oi, (o, mask)) in cfg.moving_objects.iter().zip(masks).enumerate() {
            if mask.is_empty() {
                continue;
            }
            let id = oi as u32 + 1;
            match &o.label {
                ObjectLabel::Person => things.push(ThingInstance::new(id, PERSON_CLASS_ID, "person", true, mask)?),
                ObjectLabel::Thing { class_id, class_name } => {
                    things.push(ThingInstance::new(id, *class_id, class_name.clone(), false, mask)?)
                }
                ObjectLabel::Unlabeled => {}
            }
        }
        let stuff = if background.is_empty() {
            Vec::new()
        } else {
            vec![StuffRegion::new(BACKGROUND_SEGMENT_ID, BACKGROUND_CLASS_ID, "wall", background)?]
        };
        let panoptic = PanopticFrame::new(index as u64, w, h, things, stuff)?;
        Ok((features, panoptic, pose, point_ids, dynamic))
    }
}

fn correspondences(prev: &[usize], curr: &[usize]) -> Vec<(usize, usize)> {
    let index: std::collections::HashMap<usize, usize> = prev.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    curr.iter()
        .enumerate()
        .filter_map(|(ci, p)| index.get(p).map(|&pi| (pi, ci)))
        .collect()
}

/// Generates the whole sequence. Deterministic for a fixed config (frames are
/// rendered in parallel, each from its own RNG stream).
pub fn generate_sequence(config: &SceneConfig) -> Result<SyntheticSequence, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut points = Vec::new();
    for _ in 0..config.n_background_points {
        let local = uniform_in_box(&mut rng, config.background_min, config.background_max);
        points.push(ScenePoint { owner: Owner::Background, local, descriptor: Descriptor::zero() });
    }
    for (oi, o) in config.moving_objects.iter().enumerate() {
        let he = o.half_extent;
        for _ in 0..o.n_points {
            let local = uniform_in_box(&mut rng, [-he[0], -he[1], -he[2]], he);
            points.push(ScenePoint { owner: Owner::Object(oi), local, descriptor: Descriptor::zero() });
        }
    }
    for p in points.iter_mut() {
        p.descriptor = Descriptor([rng.random(), rng.random(), rng.random(), rng.random()]);
    }
    let scene = Scene { config, points };

    let rendered: Vec<_> = (0..config.frame_count)
        .into_par_iter()
        .map(|i| scene.frame(i))
        .collect::<Result<_, _>>()?;

    let mut frames: Vec<SyntheticFrame> = Vec::with_capacity(rendered.len());
    let mut ground_truth = Trajectory::new();
    for (features, panoptic, pose, point_ids, dynamic) in rendered {
        let gt_matches = frames
            .last()
            .map(|prev| correspondences(&prev.point_ids, &point_ids))
            .unwrap_or_default();
        ground_truth
            .push(PoseSE3::from_isometry(features.timestamp, &pose))
            .expect("timestamps increase with frame index");
        frames.push(SyntheticFrame { features, panoptic, pose, point_ids, dynamic, gt_matches });
    }
    Ok(SyntheticSequence { config: config.clone(), frames, ground_truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panoptic::{classify_keypoint_region, RegionTag};
    use approx::assert_relative_eq;

    #[test]
    fn projection_cases() {
        let k = DEFAULT_INTRINSICS;
        let id = Isometry3::identity();
        assert_eq!(
            project_point(&k, &id, &Point3::new(0.0, 0.0, 1.0)),
            Projection::Pixel(PixelPoint::new(319.5, 239.5))
        );
        assert_eq!(
            project_point(&k, &id, &Point3::new(1.0, 0.0, 1.0)),
            Projection::Pixel(PixelPoint::new(844.5, 239.5))
        );
        assert_eq!(project_point(&k, &id, &Point3::new(0.0, 0.0, -1.0)), Projection::Behind);
        assert_eq!(project_point(&k, &id, &Point3::new(0.0, 0.0, 0.0)), Projection::Behind);
    }

    #[test]
    fn x_translation_fundamental() {
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let a = Isometry3::identity();
        let b = Isometry3::translation(1.0, 0.0, 0.0);
        let f = ground_truth_fundamental(&k, &a, &b).unwrap();
        let expected = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0).normalize();
        let cos = f.matrix().dot(&expected);
        assert_relative_eq!(cos.abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn identical_poses_have_no_fundamental() {
        let p = Isometry3::translation(0.3, 0.1, 0.0);
        assert!(matches!(
            ground_truth_fundamental(&DEFAULT_INTRINSICS, &p, &p),
            Err(SimError::PureRotation)
        ));
    }

    #[test]
    fn random_motion_satisfies_epipolar_constraint() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let k = DEFAULT_INTRINSICS;
        for _ in 0..20 {
            let a = Isometry3::new(
                Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5)),
                Vector3::from_fn(|_, _| rng.random_range(-0.2..0.2)),
            );
            let b = Isometry3::new(
                Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5)),
                Vector3::from_fn(|_, _| rng.random_range(-0.2..0.2)),
            );
            let f = ground_truth_fundamental(&k, &a, &b).unwrap();
            for _ in 0..100 {
                let x = Point3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(4.0..8.0));
                let (Projection::Pixel(pa), Projection::Pixel(pb)) = (project_point(&k, &a, &x), project_point(&k, &b, &x)) else {
                    continue;
                };
                let r = nalgebra::Vector3::new(pb.u, pb.v, 1.0).dot(&(f.matrix() * Vector3::new(pa.u, pa.v, 1.0)));
                assert!(r.abs() < 1e-9, "residual {r}");
            }
        }
    }

    #[test]
    fn hull_and_raster() {
        let pts = [(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0), (2.0, 2.0), (1.0, 0.0)];
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
        let mut n = 0;
        rasterize_hull(&hull, 10, 10, |_, _| n += 1);
        assert_eq!(n, 16);
    }

    #[test]
    fn static_config_has_no_dynamic_points() {
        let cfg = SceneConfig { frame_count: 3, ..SceneConfig::static_scene() };
        let seq = generate_sequence(&cfg).unwrap();
        assert!(seq.frames.iter().all(|f| f.dynamic.iter().all(|d| !d)));
        assert_eq!(seq.ground_truth.len(), 3);
        assert!(seq.frames[1].gt_matches.len() > 100);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SceneConfig { frame_count: 4, noise_sigma: 0.5, ..SceneConfig::person_and_box() };
        assert_eq!(generate_sequence(&cfg).unwrap(), generate_sequence(&cfg).unwrap());
    }

    #[test]
    fn unlabeled_box_lands_in_unknown() {
        let cfg = SceneConfig { frame_count: 3, ..SceneConfig::person_and_box() };
        let seq = generate_sequence(&cfg).unwrap();
        for frame in &seq.frames {
            let mut box_points = 0;
            for (i, kp) in frame.features.keypoints.iter().enumerate() {
                let tag = classify_keypoint_region(&frame.panoptic, kp).unwrap();
                let owner = seq_owner(&cfg, frame.point_ids[i]);
                match owner {
                    Owner::Object(1) => {
                        box_points += 1;
                        assert_eq!(tag, RegionTag::Unknown);
                    }
                    Owner::Object(0) => assert_eq!(tag, RegionTag::Person),
                    Owner::Background => assert_eq!(tag, RegionTag::Stuff),
                    Owner::Object(_) => unreachable!(),
                }
            }
            assert!(box_points > 10);
        }
    }

    fn seq_owner(cfg: &SceneConfig, point: usize) -> Owner {
        let mut n = cfg.n_background_points;
        if point < n {
            return Owner::Background;
        }
        for (i, o) in cfg.moving_objects.iter().enumerate() {
            n += o.n_points;
            if point < n {
                return Owner::Object(i);
            }
        }
        unreachable!()
    }

    #[test]
    fn bad_configs_are_rejected() {
        let bad = [
            SceneConfig { frame_count: 1, ..SceneConfig::static_scene() },
            SceneConfig { noise_sigma: -1.0, ..SceneConfig::static_scene() },
            SceneConfig { frame_rate: 0.0, ..SceneConfig::static_scene() },
            SceneConfig { background_min: [1.0, 0.0, 0.0], background_max: [0.0, 1.0, 1.0], ..SceneConfig::static_scene() },
        ];
        for cfg in bad {
            assert!(matches!(generate_sequence(&cfg), Err(SimError::Config(_))));
        }
    }
}
