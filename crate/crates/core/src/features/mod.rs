//! Multi-scale corner detection, 256-bit binary descriptors and
//! nearest-neighbour matching between consecutive frames.

mod brief;
mod fast;
pub mod io;

use std::fmt;

use image::imageops::{self, FilterType};
use image::GrayImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PixelPoint;

pub use io::{read_features_file, write_features_file};

pub const MIN_IMAGE_SIDE: u32 = 64;
const GRID_CELLS: u32 = 8;
const CENTROID_RADIUS: i64 = 15;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("image is {width}x{height}, need at least {min}x{min}", min = MIN_IMAGE_SIDE)]
    ImageTooSmall { width: u32, height: u32 },
    #[error("cannot match against an empty frame")]
    EmptyFrame,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// 256-bit binary descriptor, stored as four little-endian words.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Descriptor(pub [u64; 4]);

impl Descriptor {
    pub const BITS: usize = 256;

    pub const fn zero() -> Self {
        Self([0; 4])
    }

    pub const fn ones() -> Self {
        Self([u64::MAX; 4])
    }

    pub fn bit(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set_bit(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    pub fn flip_bit(&mut self, i: usize) {
        self.0[i / 64] ^= 1 << (i % 64);
    }

    /// 64 lowercase hex characters, byte 0 first.
    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(64);
        for word in self.0 {
            for byte in word.to_le_bytes() {
                s.push_str(&format!("{byte:02x}"));
            }
        }
        s
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        if s.len() != 64 || !s.is_ascii() {
            return None;
        }
        let mut words = [0u64; 4];
        for (w, word) in words.iter_mut().enumerate() {
            let mut bytes = [0u8; 8];
            for (b, byte) in bytes.iter_mut().enumerate() {
                let at = (w * 8 + b) * 2;
                *byte = u8::from_str_radix(&s[at..at + 2], 16).ok()?;
            }
            *word = u64::from_le_bytes(bytes);
        }
        Some(Self(words))
    }
}

impl fmt::Debug for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Descriptor({})", self.to_hex())
    }
}

pub fn hamming_distance(a: &Descriptor, b: &Descriptor) -> u32 {
    a.0.iter().zip(&b.0).map(|(x, y)| (x ^ y).count_ones()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    /// Position in full-resolution pixel coordinates.
    pub position: PixelPoint,
    pub octave: u32,
    /// Orientation in radians, `[0, 2*pi)`.
    pub angle: f64,
    pub response: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureFrame {
    pub frame_id: u64,
    pub timestamp: f64,
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
}

impl FeatureFrame {
    pub fn new(frame_id: u64, timestamp: f64) -> Self {
        Self {
            frame_id,
            timestamp,
            ..Default::default()
        }
    }

    pub fn push(&mut self, keypoint: Keypoint, descriptor: Descriptor) {
        self.keypoints.push(keypoint);
        self.descriptors.push(descriptor);
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Match {
    pub ref_index: usize,
    pub query_index: usize,
    pub distance: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub n_features: usize,
    pub n_levels: u32,
    pub scale_factor: f64,
    pub fast_threshold: u8,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            n_features: 1000,
            n_levels: 8,
            scale_factor: 1.2,
            fast_threshold: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    pub max_distance: u32,
    pub cross_check: bool,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            max_distance: 64,
            cross_check: true,
        }
    }
}

/// Splits `total` features across pyramid levels in proportion to level area.
fn features_per_level(total: usize, levels: u32, scale_factor: f64) -> Vec<usize> {
    let inv = 1.0 / scale_factor;
    let denom: f64 = (0..levels).map(|l| inv.powi(2 * l as i32)).sum();
    let mut out = Vec::with_capacity(levels as usize);
    let mut assigned = 0;
    for l in 0..levels {
        let n = if l + 1 == levels {
            total.saturating_sub(assigned)
        } else {
            ((total as f64) * inv.powi(2 * l as i32) / denom).round() as usize
        };
        let n = n.min(total - assigned);
        assigned += n;
        out.push(n);
    }
    out
}

fn intensity_centroid_angle(image: &GrayImage, x: i64, y: i64) -> f64 {
    let (w, h) = image.dimensions();
    let (mut m10, mut m01) = (0f64, 0f64);
    for dy in -CENTROID_RADIUS..=CENTROID_RADIUS {
        for dx in -CENTROID_RADIUS..=CENTROID_RADIUS {
            if dx * dx + dy * dy > CENTROID_RADIUS * CENTROID_RADIUS {
                continue;
            }
            let px = (x + dx).clamp(0, w as i64 - 1) as u32;
            let py = (y + dy).clamp(0, h as i64 - 1) as u32;
            let i = image.get_pixel(px, py)[0] as f64;
            m10 += dx as f64 * i;
            m01 += dy as f64 * i;
        }
    }
    let a = m01.atan2(m10);
    if a < 0.0 {
        a + std::f64::consts::TAU
    } else {
        a
    }
}

/// Picks up to `quota` corners, taking the strongest remaining corner of each
/// grid cell in turn so that sparse cells are not crowded out.
fn bucket(corners: Vec<fast::Corner>, width: u32, height: u32, quota: usize) -> Vec<fast::Corner> {
    if quota == 0 {
        return Vec::new();
    }
    let cell_w = width.div_ceil(GRID_CELLS);
    let cell_h = height.div_ceil(GRID_CELLS);
    let mut cells: Vec<Vec<fast::Corner>> = vec![Vec::new(); (GRID_CELLS * GRID_CELLS) as usize];
    for c in corners {
        let idx = (c.y / cell_h) * GRID_CELLS + c.x / cell_w;
        cells[idx as usize].push(c);
    }
    let by_strength = |a: &fast::Corner, b: &fast::Corner| {
        b.score.total_cmp(&a.score).then((a.y, a.x).cmp(&(b.y, b.x)))
    };
    for cell in &mut cells {
        // Weakest first so that `pop` yields the strongest.
        cell.sort_by(|a, b| by_strength(b, a));
    }
    let mut kept = Vec::with_capacity(quota);
    while kept.len() < quota {
        let mut round: Vec<fast::Corner> = cells.iter_mut().filter_map(|c| c.pop()).collect();
        if round.is_empty() {
            break;
        }
        round.sort_by(by_strength);
        round.truncate(quota - kept.len());
        kept.extend(round);
    }
    kept
}

fn describe_level(level: u32, image: &GrayImage, scale: f64, corners: Vec<fast::Corner>) -> Vec<(Keypoint, Descriptor)> {
    if corners.is_empty() {
        return Vec::new();
    }
    let smoothed = imageops::blur(image, 2.0);
    corners
        .into_iter()
        .map(|c| {
            let (x, y) = (c.x as i64, c.y as i64);
            let angle = intensity_centroid_angle(image, x, y);
            let descriptor = brief::describe(&smoothed, x, y, angle);
            let keypoint = Keypoint {
                position: PixelPoint::new(c.x as f64 * scale, c.y as f64 * scale),
                octave: level,
                angle,
                response: c.score as f64,
            };
            (keypoint, descriptor)
        })
        .collect()
}

/// FAST corners on an image pyramid, oriented by intensity centroid and
/// described with rotated BRIEF.
///
/// Output is sorted by octave, then response (descending), then `u`, then `v`.
/// The returned frame has id 0 and timestamp 0.
pub fn detect_and_describe(
    image: &GrayImage,
    params: &DetectorParams,
) -> Result<FeatureFrame, FeatureError> {
    let (width, height) = image.dimensions();
    if width < MIN_IMAGE_SIDE || height < MIN_IMAGE_SIDE {
        return Err(FeatureError::ImageTooSmall { width, height });
    }
    let levels = params.n_levels.max(1);
    let quotas = features_per_level(params.n_features, levels, params.scale_factor);

    let mut pyramid = vec![(1.0f64, image.clone())];
    for l in 1..levels {
        let scale = params.scale_factor.powi(l as i32);
        let lw = (width as f64 / scale).round() as u32;
        let lh = (height as f64 / scale).round() as u32;
        if lw < 2 * brief::PATTERN_RADIUS + 8 || lh < 2 * brief::PATTERN_RADIUS + 8 {
            break;
        }
        pyramid.push((scale, imageops::resize(image, lw, lh, FilterType::Triangle)));
    }

    let detected: Vec<Vec<fast::Corner>> = pyramid
        .par_iter()
        .map(|(_, img)| fast::detect(img, params.fast_threshold, brief::PATTERN_RADIUS))
        .collect();
    // Quota a level cannot fill passes to the next one.
    let mut carry = 0;
    let selected: Vec<Vec<fast::Corner>> = detected
        .into_iter()
        .zip(&pyramid)
        .enumerate()
        .map(|(l, (corners, (_, img)))| {
            let quota = quotas[l] + carry;
            let kept = bucket(corners, img.width(), img.height(), quota);
            carry = quota - kept.len();
            kept
        })
        .collect();
    let per_level: Vec<Vec<(Keypoint, Descriptor)>> = pyramid
        .par_iter()
        .zip(selected)
        .enumerate()
        .map(|(l, ((scale, img), corners))| describe_level(l as u32, img, *scale, corners))
        .collect();

    let mut all: Vec<(Keypoint, Descriptor)> = per_level.into_iter().flatten().collect();
    all.sort_by(|(a, _), (b, _)| {
        a.octave
            .cmp(&b.octave)
            .then(b.response.total_cmp(&a.response))
            .then(a.position.u.total_cmp(&b.position.u))
            .then(a.position.v.total_cmp(&b.position.v))
    });
    let mut frame = FeatureFrame::default();
    for (k, d) in all {
        frame.push(k, d);
    }
    Ok(frame)
}

/// Index and distance of the nearest descriptor; ties go to the lower index.
fn nearest(d: &Descriptor, candidates: &[Descriptor]) -> Option<(usize, u32)> {
    let mut best: Option<(usize, u32)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let dist = hamming_distance(d, c);
        if best.map_or(true, |(_, b)| dist < b) {
            best = Some((i, dist));
        }
    }
    best
}

/// Brute-force nearest-neighbour matching from `reference` into `query`.
///
/// Each query keypoint appears in at most one match. With `cross_check`, only
/// mutual nearest neighbours are kept; without it, a query claimed by several
/// reference keypoints goes to the closest one. Output is sorted by `ref_index`.
pub fn match_nearest_neighbor(
    reference: &FeatureFrame,
    query: &FeatureFrame,
    params: &MatchParams,
) -> Result<Vec<Match>, FeatureError> {
    if reference.is_empty() || query.is_empty() {
        return Err(FeatureError::EmptyFrame);
    }
    let forward: Vec<Option<(usize, u32)>> = reference
        .descriptors
        .par_iter()
        .map(|d| nearest(d, &query.descriptors))
        .collect();

    let mut matches = Vec::new();
    if params.cross_check {
        let backward: Vec<Option<(usize, u32)>> = query
            .descriptors
            .par_iter()
            .map(|d| nearest(d, &reference.descriptors))
            .collect();
        for (ri, f) in forward.iter().enumerate() {
            if let Some((qi, dist)) = *f {
                if dist <= params.max_distance && backward[qi].map(|b| b.0) == Some(ri) {
                    matches.push(Match { ref_index: ri, query_index: qi, distance: dist });
                }
            }
        }
    } else {
        let mut owner: Vec<Option<Match>> = vec![None; query.len()];
        for (ri, f) in forward.iter().enumerate() {
            if let Some((qi, dist)) = *f {
                if dist > params.max_distance {
                    continue;
                }
                let m = Match { ref_index: ri, query_index: qi, distance: dist };
                match owner[qi] {
                    Some(prev) if prev.distance <= dist => {}
                    _ => owner[qi] = Some(m),
                }
            }
        }
        matches = owner.into_iter().flatten().collect();
        matches.sort_by_key(|m| m.ref_index);
    }
    Ok(matches)
}
