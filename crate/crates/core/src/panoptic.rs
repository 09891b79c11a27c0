//! Panoptic segmentation data model: thing instances, stuff regions and the
//! derived unknown mask, plus keypoint region tagging and frame-to-frame
//! association of thing instances.
//!
//! On disk a frame is a 16-bit single-channel PNG label map (pixel value =
//! segment id, 0 = unlabeled) and a JSON sidecar describing the segments:
//!
//! ```json
//! {"frame_id": 3, "width": 640, "height": 480,
//!  "segments": [{"id": 1, "class_id": 1, "class_name": "person", "isthing": true,
//!                "is_person": true, "bbox": [10, 20, 50, 90]}]}
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Keypoint;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.3;

#[derive(Debug, Error)]
pub enum PanopticError {
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("partition error: {0}")]
    Partition(String),
    #[error("keypoint ({u}, {v}) is outside the {width}x{height} image")]
    OutOfBounds { u: f64, v: f64, width: u32, height: u32 },
    #[error("mask dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((u32, u32), (u32, u32)),
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn format_err(path: &Path, message: impl Into<String>) -> PanopticError {
    PanopticError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Image-sized bit set.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Bitmap {
    width: u32,
    height: u32,
    words: Vec<u64>,
}

impl std::fmt::Debug for Bitmap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Bitmap({}x{}, {} set)", self.width, self.height, self.count())
    }
}

impl Bitmap {
    pub fn new(width: u32, height: u32) -> Self {
        let n = (width as usize * height as usize).div_ceil(64);
        Self { width, height, words: vec![0; n] }
    }

    pub fn full(width: u32, height: u32) -> Self {
        let mut b = Self::new(width, height);
        b.words.iter_mut().for_each(|w| *w = u64::MAX);
        b.clear_padding();
        b
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    fn clear_padding(&mut self) {
        let n = self.width as usize * self.height as usize;
        if n % 64 != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << (n % 64)) - 1;
            }
        }
    }

    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        if x >= self.width || y >= self.height {
            return false;
        }
        let i = self.index(x, y);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        assert!(x < self.width && y < self.height, "({x}, {y}) out of bounds");
        let i = self.index(x, y);
        if value {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    /// Sets every pixel of the inclusive rectangle, clipped to the image.
    pub fn fill_rect(&mut self, u_min: u32, v_min: u32, u_max: u32, v_max: u32) {
        for y in v_min..=v_max.min(self.height.saturating_sub(1)) {
            for x in u_min..=u_max.min(self.width.saturating_sub(1)) {
                self.set(x, y, true);
            }
        }
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    fn check_dims(&self, other: &Bitmap) -> Result<(), PanopticError> {
        if self.dimensions() != other.dimensions() {
            return Err(PanopticError::DimensionMismatch(self.dimensions(), other.dimensions()));
        }
        Ok(())
    }

    pub fn intersection_count(&self, other: &Bitmap) -> Result<usize, PanopticError> {
        self.check_dims(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum())
    }

    pub fn union_count(&self, other: &Bitmap) -> Result<usize, PanopticError> {
        self.check_dims(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum())
    }

    pub fn union_with(&mut self, other: &Bitmap) -> Result<(), PanopticError> {
        self.check_dims(other)?;
        self.words.iter_mut().zip(&other.words).for_each(|(a, b)| *a |= b);
        Ok(())
    }

    pub fn complement(&self) -> Bitmap {
        let mut out = self.clone();
        out.words.iter_mut().for_each(|w| *w = !*w);
        out.clear_padding();
        out
    }

    /// Set pixels in raster order.
    pub fn iter_set(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.words.iter().enumerate().flat_map(move |(wi, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let i = wi * 64 + b;
                Some(((i % w) as u32, (i / w) as u32))
            })
        })
    }

    /// Tight inclusive bounding box, `None` when empty.
    pub fn bounding_box(&self) -> Option<BoundingBox> {
        let mut bb: Option<BoundingBox> = None;
        for (x, y) in self.iter_set() {
            bb = Some(match bb {
                None => BoundingBox::new(x, y, x, y),
                Some(b) => BoundingBox::new(b.u_min.min(x), b.v_min.min(y), b.u_max.max(x), b.v_max.max(y)),
            });
        }
        bb
    }
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub u_min: u32,
    pub v_min: u32,
    pub u_max: u32,
    pub v_max: u32,
}

impl BoundingBox {
    pub const fn new(u_min: u32, v_min: u32, u_max: u32, v_max: u32) -> Self {
        Self { u_min, v_min, u_max, v_max }
    }

    /// True when the two rectangles share at least one pixel.
    pub fn overlaps(&self, other: &BoundingBox) -> bool {
        self.u_min <= other.u_max
            && other.u_min <= self.u_max
            && self.v_min <= other.v_max
            && other.v_min <= self.v_max
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        (self.u_min..=self.u_max).contains(&x) && (self.v_min..=self.v_max).contains(&y)
    }

    pub fn contains_box(&self, other: &BoundingBox) -> bool {
        self.contains(other.u_min, other.v_min) && self.contains(other.u_max, other.v_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThingInstance {
    pub instance_id: u32,
    pub class_id: u32,
    pub class_name: String,
    pub is_person: bool,
    pub bbox: BoundingBox,
    pub mask: Bitmap,
    pub track_id: Option<u64>,
}

impl ThingInstance {
    /// Builds an instance; the bounding box is derived from the mask.
    pub fn new(
        instance_id: u32,
        class_id: u32,
        class_name: impl Into<String>,
        is_person: bool,
        mask: Bitmap,
    ) -> Result<Self, PanopticError> {
        let bbox = mask
            .bounding_box()
            .ok_or_else(|| PanopticError::InvalidSegment(format!("thing {instance_id} has an empty mask")))?;
        Ok(Self {
            instance_id,
            class_id,
            class_name: class_name.into(),
            is_person,
            bbox,
            mask,
            track_id: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StuffRegion {
    /// Segment id in the label map.
    pub segment_id: u32,
    pub class_id: u32,
    pub class_name: String,
    pub mask: Bitmap,
}

impl StuffRegion {
    pub fn new(
        segment_id: u32,
        class_id: u32,
        class_name: impl Into<String>,
        mask: Bitmap,
    ) -> Result<Self, PanopticError> {
        if mask.is_empty() {
            return Err(PanopticError::InvalidSegment(format!("stuff {segment_id} has an empty mask")));
        }
        Ok(Self {
            segment_id,
            class_id,
            class_name: class_name.into(),
            mask,
        })
    }
}

/// One segmented image. Thing, stuff and unknown pixels partition the image.
#[derive(Debug, Clone, PartialEq)]
pub struct PanopticFrame {
    pub frame_id: u64,
    width: u32,
    height: u32,
    things: Vec<ThingInstance>,
    stuff: Vec<StuffRegion>,
    unknown: Bitmap,
}

impl PanopticFrame {
    /// Validates the partition (disjoint, correctly sized, non-empty masks,
    /// unique segment ids) and derives the unknown mask.
    pub fn new(
        frame_id: u64,
        width: u32,
        height: u32,
        things: Vec<ThingInstance>,
        stuff: Vec<StuffRegion>,
    ) -> Result<Self, PanopticError> {
        let mut covered = Bitmap::new(width, height);
        let mut ids = BTreeSet::new();
        let masks = things
            .iter()
            .map(|t| (t.instance_id, &t.mask))
            .chain(stuff.iter().map(|s| (s.segment_id, &s.mask)));
        for (id, mask) in masks {
            if mask.dimensions() != (width, height) {
                return Err(PanopticError::DimensionMismatch(mask.dimensions(), (width, height)));
            }
            if mask.is_empty() {
                return Err(PanopticError::InvalidSegment(format!("segment {id} has an empty mask")));
            }
            if id == 0 || !ids.insert(id) {
                return Err(PanopticError::Partition(format!("segment id {id} is reserved or duplicated")));
            }
            if covered.intersection_count(mask)? != 0 {
                return Err(PanopticError::Partition(format!("segment {id} overlaps another segment")));
            }
            covered.union_with(mask)?;
        }
        for t in &things {
            if t.mask.bounding_box() != Some(t.bbox) {
                return Err(PanopticError::InvalidSegment(format!(
                    "thing {} bbox does not tightly bound its mask",
                    t.instance_id
                )));
            }
        }
        Ok(Self {
            frame_id,
            width,
            height,
            things,
            stuff,
            unknown: covered.complement(),
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn things(&self) -> &[ThingInstance] {
        &self.things
    }

    pub fn stuff(&self) -> &[StuffRegion] {
        &self.stuff
    }

    pub fn unknown(&self) -> &Bitmap {
        &self.unknown
    }

    pub fn thing(&self, instance_id: u32) -> Option<&ThingInstance> {
        self.things.iter().find(|t| t.instance_id == instance_id)
    }

    /// Track ids are bookkeeping and may be updated after construction.
    pub fn set_track_id(&mut self, instance_id: u32, track_id: u64) {
        if let Some(t) = self.things.iter_mut().find(|t| t.instance_id == instance_id) {
            t.track_id = Some(track_id);
        }
    }

    /// Region tag of an integer pixel.
    pub fn tag_at(&self, x: u32, y: u32) -> RegionTag {
        for t in &self.things {
            if t.bbox.contains(x, y) && t.mask.get(x, y) {
                return if t.is_person {
                    RegionTag::Person
                } else {
                    RegionTag::Thing(t.instance_id)
                };
            }
        }
        if self.stuff.iter().any(|s| s.mask.get(x, y)) {
            RegionTag::Stuff
        } else {
            RegionTag::Unknown
        }
    }
}

/// Which segment a keypoint falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionTag {
    Person,
    Thing(u32),
    Stuff,
    Unknown,
}

/// Complement of the union of all thing and stuff masks.
pub fn unknown_mask(frame: &PanopticFrame) -> Bitmap {
    frame.unknown.clone()
}

/// Tags a keypoint by the mask covering its floored pixel coordinates. No
/// dilation is applied.
pub fn classify_keypoint_region(
    frame: &PanopticFrame,
    kp: &Keypoint,
) -> Result<RegionTag, PanopticError> {
    let (u, v) = (kp.position.u, kp.position.v);
    let out = PanopticError::OutOfBounds { u, v, width: frame.width, height: frame.height };
    if !(u >= 0.0 && v >= 0.0) {
        return Err(out);
    }
    let (x, y) = (u.floor(), v.floor());
    if x >= frame.width as f64 || y >= frame.height as f64 {
        return Err(out);
    }
    Ok(frame.tag_at(x as u32, y as u32))
}

/// Intersection over union of two masks; 0 when both are empty.
pub fn contour_iou(a: &Bitmap, b: &Bitmap) -> Result<f64, PanopticError> {
    let inter = a.intersection_count(b)?;
    let union = a.union_count(b)?;
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// Current-frame instance id to previous-frame instance id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Association {
    pub matched: BTreeMap<u32, u32>,
    pub new_instances: BTreeSet<u32>,
}

impl Association {
    pub fn previous_of(&self, current: u32) -> Option<u32> {
        self.matched.get(&current).copied()
    }

    pub fn is_new(&self, current: u32) -> bool {
        self.new_instances.contains(&current)
    }
}

/// Greedy short-term association of thing instances between consecutive frames.
///
/// Candidates must share a class and have overlapping bounding boxes; those
/// with mask IoU at or above `iou_threshold` are accepted in order of
/// decreasing IoU, each instance used at most once.
pub fn associate_things(
    prev: &PanopticFrame,
    curr: &PanopticFrame,
    iou_threshold: f64,
) -> Association {
    let mut candidates: Vec<(f64, u32, u32)> = Vec::new();
    for c in &curr.things {
        for p in &prev.things {
            if c.class_id != p.class_id || !c.bbox.overlaps(&p.bbox) {
                continue;
            }
            let Ok(iou) = contour_iou(&c.mask, &p.mask) else {
                continue;
            };
            if iou >= iou_threshold && iou > 0.0 {
                candidates.push((iou, c.instance_id, p.instance_id));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));

    let mut assoc = Association::default();
    let mut used_prev = BTreeSet::new();
    for (_, c, p) in candidates {
        if assoc.matched.contains_key(&c) || used_prev.contains(&p) {
            continue;
        }
        assoc.matched.insert(c, p);
        used_prev.insert(p);
    }
    for c in &curr.things {
        if !assoc.matched.contains_key(&c.instance_id) {
            assoc.new_instances.insert(c.instance_id);
        }
    }
    assoc
}

/// Copies track ids along an association and allocates fresh ids (from
/// `next_track_id`) to new instances and to matches whose predecessor had none.
pub fn propagate_track_ids(
    prev: &PanopticFrame,
    curr: &mut PanopticFrame,
    assoc: &Association,
    next_track_id: &mut u64,
) {
    for t in curr.things.iter_mut() {
        let inherited = assoc
            .previous_of(t.instance_id)
            .and_then(|p| prev.thing(p))
            .and_then(|p| p.track_id);
        t.track_id = Some(inherited.unwrap_or_else(|| {
            let id = *next_track_id;
            *next_track_id += 1;
            id
        }));
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SegmentInfo {
    pub id: u32,
    pub class_id: u32,
    pub class_name: String,
    pub isthing: bool,
    #[serde(default)]
    pub is_person: bool,
    pub bbox: [u32; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Sidecar {
    pub frame_id: u64,
    pub width: u32,
    pub height: u32,
    pub segments: Vec<SegmentInfo>,
}

pub fn mask_paths(masks_dir: &Path, frame_id: u64) -> (PathBuf, PathBuf) {
    (
        masks_dir.join(format!("{frame_id}.png")),
        masks_dir.join(format!("{frame_id}.json")),
    )
}

/// Reads a label map and its sidecar. A segment is a person when the sidecar
/// says so or when its class name is in `person_classes`.
pub fn load_panoptic_frame(
    label_map: &Path,
    sidecar: &Path,
    person_classes: &[String],
) -> Result<PanopticFrame, PanopticError> {
    let text = fs::read_to_string(sidecar).map_err(|source| PanopticError::Io {
        path: sidecar.to_path_buf(),
        source,
    })?;
    let meta: Sidecar =
        serde_json::from_str(&text).map_err(|e| format_err(sidecar, e.to_string()))?;

    let img = image::open(label_map).map_err(|e| format_err(label_map, e.to_string()))?;
    let img = match img {
        image::DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(format_err(
                label_map,
                format!("expected a 16-bit single-channel PNG, got {:?}", other.color()),
            ))
        }
    };
    if img.dimensions() != (meta.width, meta.height) {
        return Err(format_err(
            label_map,
            format!(
                "label map is {}x{}, sidecar declares {}x{}",
                img.width(),
                img.height(),
                meta.width,
                meta.height
            ),
        ));
    }

    let mut slot: BTreeMap<u32, usize> = BTreeMap::new();
    for (i, s) in meta.segments.iter().enumerate() {
        if s.id == 0 || s.id > u16::MAX as u32 {
            return Err(format_err(sidecar, format!("segment id {} is out of range", s.id)));
        }
        if slot.insert(s.id, i).is_some() {
            return Err(PanopticError::Partition(format!(
                "segment id {} declared twice in {}",
                s.id,
                sidecar.display()
            )));
        }
    }

    let mut masks = vec![Bitmap::new(meta.width, meta.height); meta.segments.len()];
    for (x, y, px) in img.enumerate_pixels() {
        let id = px[0] as u32;
        if id == 0 {
            continue;
        }
        let Some(&i) = slot.get(&id) else {
            return Err(format_err(label_map, format!("pixel ({x}, {y}) has undeclared segment id {id}")));
        };
        masks[i].set(x, y, true);
    }

    let mut things = Vec::new();
    let mut stuff = Vec::new();
    for (s, mask) in meta.segments.into_iter().zip(masks) {
        let Some(tight) = mask.bounding_box() else {
            return Err(format_err(sidecar, format!("segment {} has an empty mask", s.id)));
        };
        if s.isthing {
            let declared = BoundingBox::new(s.bbox[0], s.bbox[1], s.bbox[2], s.bbox[3]);
            if !declared.contains_box(&tight) {
                return Err(format_err(
                    sidecar,
                    format!("segment {} bbox {:?} does not contain its mask", s.id, s.bbox),
                ));
            }
            let is_person = s.is_person || person_classes.iter().any(|c| *c == s.class_name);
            things.push(ThingInstance::new(s.id, s.class_id, s.class_name, is_person, mask)?);
        } else {
            stuff.push(StuffRegion::new(s.id, s.class_id, s.class_name, mask)?);
        }
    }
    PanopticFrame::new(meta.frame_id, meta.width, meta.height, things, stuff)
}

/// Writes `<frame_id>.png` and `<frame_id>.json` into `masks_dir`.
pub fn write_panoptic_frame(frame: &PanopticFrame, masks_dir: &Path) -> Result<(), PanopticError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PanopticError::Io { path, source }
    };
    fs::create_dir_all(masks_dir).map_err(io_err(masks_dir))?;
    let (png_path, json_path) = mask_paths(masks_dir, frame.frame_id);

    let mut labels: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::new(frame.width, frame.height);
    let mut segments = Vec::new();
    for t in &frame.things {
        let id = u16::try_from(t.instance_id)
            .map_err(|_| PanopticError::InvalidSegment(format!("id {} exceeds 16 bits", t.instance_id)))?;
        for (x, y) in t.mask.iter_set() {
            labels.put_pixel(x, y, Luma([id]));
        }
        segments.push(SegmentInfo {
            id: t.instance_id,
            class_id: t.class_id,
            class_name: t.class_name.clone(),
            isthing: true,
            is_person: t.is_person,
            bbox: [t.bbox.u_min, t.bbox.v_min, t.bbox.u_max, t.bbox.v_max],
        });
    }
    for s in &frame.stuff {
        let id = u16::try_from(s.segment_id)
            .map_err(|_| PanopticError::InvalidSegment(format!("id {} exceeds 16 bits", s.segment_id)))?;
        for (x, y) in s.mask.iter_set() {
            labels.put_pixel(x, y, Luma([id]));
        }
        let bb = s.mask.bounding_box().unwrap_or(BoundingBox::new(0, 0, 0, 0));
        segments.push(SegmentInfo {
            id: s.segment_id,
            class_id: s.class_id,
            class_name: s.class_name.clone(),
            isthing: false,
            is_person: false,
            bbox: [bb.u_min, bb.v_min, bb.u_max, bb.v_max],
        });
    }
    labels
        .save(&png_path)
        .map_err(|e| format_err(&png_path, e.to_string()))?;
    let sidecar = Sidecar {
        frame_id: frame.frame_id,
        width: frame.width,
        height: frame.height,
        segments,
    };
    let json = serde_json::to_string(&sidecar).map_err(|e| format_err(&json_path, e.to_string()))?;
    fs::write(&json_path, json).map_err(io_err(&json_path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PixelPoint;
    use proptest::prelude::*;

    fn rect(w: u32, h: u32, u0: u32, v0: u32, u1: u32, v1: u32) -> Bitmap {
        let mut b = Bitmap::new(w, h);
        b.fill_rect(u0, v0, u1, v1);
        b
    }

    fn kp(u: f64, v: f64) -> Keypoint {
        Keypoint { position: PixelPoint::new(u, v), octave: 0, angle: 0.0, response: 0.0 }
    }

    #[test]
    fn bitmap_basics() {
        let mut b = Bitmap::new(10, 7);
        assert!(b.is_empty());
        b.set(9, 6, true);
        b.set(0, 0, true);
        assert_eq!(b.count(), 2);
        assert_eq!(b.iter_set().collect::<Vec<_>>(), vec![(0, 0), (9, 6)]);
        assert_eq!(b.complement().count(), 68);
        assert_eq!(Bitmap::full(10, 7).count(), 70);
        assert_eq!(b.bounding_box(), Some(BoundingBox::new(0, 0, 9, 6)));
        assert!(!b.get(10, 0));
    }

    #[test]
    fn unknown_is_complement_of_known() {
        let full = StuffRegion::new(1, 10, "wall", Bitmap::full(20, 20)).unwrap();
        let f = PanopticFrame::new(0, 20, 20, vec![], vec![full]).unwrap();
        assert!(unknown_mask(&f).is_empty());

        let part = StuffRegion::new(1, 10, "wall", rect(20, 20, 0, 0, 9, 9)).unwrap();
        let f = PanopticFrame::new(0, 20, 20, vec![], vec![part]).unwrap();
        assert_eq!(unknown_mask(&f).count(), 300);
    }

    #[test]
    fn overlapping_segments_are_rejected() {
        let a = ThingInstance::new(1, 1, "person", true, rect(10, 10, 0, 0, 4, 4)).unwrap();
        let b = StuffRegion::new(2, 5, "floor", rect(10, 10, 4, 4, 9, 9)).unwrap();
        assert!(matches!(
            PanopticFrame::new(0, 10, 10, vec![a.clone()], vec![b]),
            Err(PanopticError::Partition(_))
        ));
        assert!(matches!(
            PanopticFrame::new(0, 10, 10, vec![a.clone(), a], vec![]),
            Err(PanopticError::Partition(_))
        ));
        assert!(ThingInstance::new(1, 1, "x", false, Bitmap::new(5, 5)).is_err());
    }

    #[test]
    fn region_tags() {
        let person = ThingInstance::new(1, 1, "person", true, rect(20, 20, 0, 0, 4, 4)).unwrap();
        let chair = ThingInstance::new(2, 62, "chair", false, rect(20, 20, 10, 10, 14, 14)).unwrap();
        let floor = StuffRegion::new(3, 200, "floor", rect(20, 20, 5, 0, 9, 19)).unwrap();
        let f = PanopticFrame::new(0, 20, 20, vec![person, chair], vec![floor]).unwrap();
        assert_eq!(classify_keypoint_region(&f, &kp(2.5, 2.5)).unwrap(), RegionTag::Person);
        assert_eq!(classify_keypoint_region(&f, &kp(12.0, 12.0)).unwrap(), RegionTag::Thing(2));
        assert_eq!(classify_keypoint_region(&f, &kp(17.0, 3.0)).unwrap(), RegionTag::Unknown);
        // Boundary: (4.99, 1) floors to pixel 4 (person), (5.0, 1) is floor.
        assert_eq!(classify_keypoint_region(&f, &kp(4.99, 1.0)).unwrap(), RegionTag::Person);
        assert_eq!(classify_keypoint_region(&f, &kp(5.0, 1.0)).unwrap(), RegionTag::Stuff);
        assert!(matches!(
            classify_keypoint_region(&f, &kp(20.0, 1.0)),
            Err(PanopticError::OutOfBounds { .. })
        ));
        assert!(classify_keypoint_region(&f, &kp(-0.5, 1.0)).is_err());
    }

    #[test]
    fn iou_cases() {
        let a = rect(10, 10, 0, 0, 2, 2);
        assert_eq!(contour_iou(&a, &a).unwrap(), 1.0);
        let b = rect(10, 10, 5, 5, 6, 6);
        assert_eq!(contour_iou(&a, &b).unwrap(), 0.0);
        // Pixel squares [0,2)x[0,2) and [1,3)x[0,2): areas 4 and 4, overlap 2.
        let c = rect(10, 10, 0, 0, 1, 1);
        let d = rect(10, 10, 1, 0, 2, 1);
        assert!((contour_iou(&c, &d).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(contour_iou(&Bitmap::new(4, 4), &Bitmap::new(4, 4)).unwrap(), 0.0);
        assert!(matches!(
            contour_iou(&Bitmap::new(4, 4), &Bitmap::new(4, 5)),
            Err(PanopticError::DimensionMismatch(..))
        ));
    }

    proptest! {
        #[test]
        fn iou_is_symmetric(
            r1 in (0u32..16, 0u32..16, 0u32..16, 0u32..16),
            r2 in (0u32..16, 0u32..16, 0u32..16, 0u32..16),
        ) {
            let a = rect(16, 16, r1.0.min(r1.1), r1.2.min(r1.3), r1.0.max(r1.1), r1.2.max(r1.3));
            let b = rect(16, 16, r2.0.min(r2.1), r2.2.min(r2.3), r2.0.max(r2.1), r2.2.max(r2.3));
            let ab = contour_iou(&a, &b).unwrap();
            prop_assert_eq!(ab, contour_iou(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab == 1.0, a == b);
        }
    }

    fn frame_with(things: Vec<ThingInstance>) -> PanopticFrame {
        PanopticFrame::new(0, 40, 40, things, vec![]).unwrap()
    }

    #[test]
    fn identical_instance_is_associated_and_keeps_track() {
        let t = ThingInstance::new(4, 62, "chair", false, rect(40, 40, 5, 5, 15, 15)).unwrap();
        let mut prev = frame_with(vec![t.clone()]);
        prev.set_track_id(4, 11);
        let mut curr = frame_with(vec![ThingInstance { instance_id: 9, ..t }]);
        let assoc = associate_things(&prev, &curr, DEFAULT_IOU_THRESHOLD);
        assert_eq!(assoc.previous_of(9), Some(4));
        assert!(assoc.new_instances.is_empty());
        let mut next = 100;
        propagate_track_ids(&prev, &mut curr, &assoc, &mut next);
        assert_eq!(curr.thing(9).unwrap().track_id, Some(11));
        assert_eq!(next, 100);
    }

    #[test]
    fn unseen_instance_is_new() {
        let prev = frame_with(vec![]);
        let t = ThingInstance::new(1, 62, "chair", false, rect(40, 40, 5, 5, 15, 15)).unwrap();
        let mut curr = frame_with(vec![t]);
        let assoc = associate_things(&prev, &curr, DEFAULT_IOU_THRESHOLD);
        assert!(assoc.is_new(1));
        let mut next = 7;
        propagate_track_ids(&prev, &mut curr, &assoc, &mut next);
        assert_eq!(curr.thing(1).unwrap().track_id, Some(7));
        assert_eq!(next, 8);
    }

    #[test]
    fn different_classes_never_associate() {
        let a = ThingInstance::new(1, 62, "chair", false, rect(40, 40, 5, 5, 15, 15)).unwrap();
        let b = ThingInstance::new(1, 63, "couch", false, rect(40, 40, 5, 5, 15, 15)).unwrap();
        let assoc = associate_things(&frame_with(vec![a]), &frame_with(vec![b]), 0.3);
        assert!(assoc.is_new(1));
    }

    #[test]
    fn low_iou_is_not_associated() {
        let a = ThingInstance::new(1, 62, "chair", false, rect(40, 40, 0, 0, 9, 9)).unwrap();
        let b = ThingInstance::new(1, 62, "chair", false, rect(40, 40, 8, 8, 17, 17)).unwrap();
        let assoc = associate_things(&frame_with(vec![a]), &frame_with(vec![b]), 0.3);
        assert!(assoc.matched.is_empty());
    }
}
