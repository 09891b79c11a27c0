//! FAST-9 segment test with 3x3 non-maximum suppression.

use image::GrayImage;

/// Bresenham circle of radius 3, clockwise from 12 o'clock.
const CIRCLE: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

const ARC_LENGTH: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Corner {
    pub x: u32,
    pub y: u32,
    pub score: f32,
}

fn has_arc(flags: u32) -> bool {
    // Duplicate the 16 flags so that wrap-around arcs are contiguous.
    let doubled = flags | (flags << 16);
    let mut run = 0;
    for i in 0..32 {
        if doubled & (1 << i) != 0 {
            run += 1;
            if run >= ARC_LENGTH {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}

/// Corner score of pixel `(x, y)`, or `None` if it fails the segment test.
/// The score is the summed excess over `threshold` of the winning side.
fn segment_score(image: &GrayImage, x: u32, y: u32, threshold: u8) -> Option<f32> {
    let center = image.get_pixel(x, y)[0] as i32;
    let t = threshold as i32;
    let mut brighter = 0u32;
    let mut darker = 0u32;
    let mut bright_sum = 0i32;
    let mut dark_sum = 0i32;
    for (i, (dx, dy)) in CIRCLE.iter().enumerate() {
        let p = image.get_pixel((x as i32 + dx) as u32, (y as i32 + dy) as u32)[0] as i32;
        if p > center + t {
            brighter |= 1 << i;
            bright_sum += p - center - t;
        } else if p < center - t {
            darker |= 1 << i;
            dark_sum += center - p - t;
        }
    }
    let bright = has_arc(brighter).then_some(bright_sum);
    let dark = has_arc(darker).then_some(dark_sum);
    bright.max(dark).map(|s| s as f32)
}

/// All FAST-9 corners at least `border` pixels away from the image edge,
/// after non-maximum suppression. Output is in raster order.
pub(crate) fn detect(image: &GrayImage, threshold: u8, border: u32) -> Vec<Corner> {
    let (w, h) = image.dimensions();
    let border = border.max(3);
    if w <= 2 * border || h <= 2 * border {
        return Vec::new();
    }
    let mut scores = vec![0f32; (w * h) as usize];
    for y in border..h - border {
        for x in border..w - border {
            if let Some(s) = segment_score(image, x, y, threshold) {
                // Zero-excess corners still need a positive score to survive NMS.
                scores[(y * w + x) as usize] = s + 1.0;
            }
        }
    }
    let mut corners = Vec::new();
    for y in border..h - border {
        for x in border..w - border {
            let s = scores[(y * w + x) as usize];
            if s <= 0.0 {
                continue;
            }
            let mut is_max = true;
            'nms: for ny in y - 1..=y + 1 {
                for nx in x - 1..=x + 1 {
                    if (nx, ny) == (x, y) {
                        continue;
                    }
                    let n = scores[(ny * w + nx) as usize];
                    // Ties resolve to the first pixel in raster order.
                    if n > s || (n == s && (ny, nx) < (y, x)) {
                        is_max = false;
                        break 'nms;
                    }
                }
            }
            if is_max {
                corners.push(Corner { x, y, score: s });
            }
        }
    }
    corners
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Luma;

    #[test]
    fn arc_detection_wraps() {
        assert!(has_arc(0b1_1111_1111));
        assert!(!has_arc(0b1111_1111));
        // 5 at the end + 4 at the start is a 9-arc through the wrap point.
        assert!(has_arc(0xF800 | 0x000F));
        assert!(!has_arc(0xF000 | 0x000F));
    }

    #[test]
    fn flat_image_has_no_corners() {
        let img = GrayImage::from_pixel(64, 64, Luma([128]));
        assert!(detect(&img, 20, 3).is_empty());
    }

    #[test]
    fn bright_square_corner_is_detected() {
        let mut img = GrayImage::from_pixel(64, 64, Luma([0]));
        for y in 20..64 {
            for x in 20..64 {
                img.put_pixel(x, y, Luma([255]));
            }
        }
        let corners = detect(&img, 20, 3);
        assert!(!corners.is_empty());
        assert!(corners
            .iter()
            .any(|c| (c.x as i32 - 20).abs() <= 2 && (c.y as i32 - 20).abs() <= 2));
    }
}
