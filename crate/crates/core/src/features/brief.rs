//! Rotated BRIEF: 256 intensity comparisons on a smoothed patch, steered by
//! the keypoint orientation.

use image::GrayImage;

use super::Descriptor;

/// Test locations `[x1, y1, x2, y2]` relative to the keypoint, drawn once from
/// an isotropic Gaussian (sigma = 31/5) and clipped to a 27x27 window.
#[rustfmt::skip]
pub(crate) const SAMPLING_PATTERN: [[i8; 4]; 256] = [
    [3, 7, -4, -3], [6, 10, -9, 3], [4, 3, -1, -8], [-2, 8, 1, 0],
    [3, -2, 3, -4], [-5, -8, 4, 3], [12, -7, 6, 10], [4, 0, -6, 0],
    [6, 7, -4, 5], [2, -5, 11, -2], [-5, -3, 2, 0], [-2, 9, 4, -1],
    [1, -1, 1, 1], [-5, -5, -11, 0], [1, 13, -12, -5], [5, -2, 0, 8],
    [0, -4, -4, 2], [3, 1, 4, 13], [7, -1, 3, 10], [0, -2, 3, -3],
    [0, -5, -2, -5], [-1, -3, 6, 11], [4, 5, -2, 1], [-13, -7, 0, 1],
    [1, 8, -2, 9], [-3, 7, 6, 2], [-2, -1, -8, 2], [-5, -8, -7, -4],
    [-5, 10, -5, 6], [5, 8, 6, -4], [7, 3, -4, 7], [4, 0, -1, 6],
    [5, 0, -3, -5], [-4, -9, -4, 2], [2, -5, 2, 6], [-10, 1, -2, -1],
    [2, -4, -1, -2], [4, -5, 0, -7], [-1, -1, -3, -12], [-7, 3, 0, -3],
    [-1, 3, 10, -10], [-1, 2, -8, 13], [-3, -1, 0, -7], [2, -6, -4, -1],
    [-1, -1, -6, -4], [-7, -3, 6, 8], [10, 2, 8, 7], [3, 1, 13, -6],
    [-1, 3, 0, -5], [-2, 9, -1, 5], [9, -1, 12, -5], [8, -3, 3, 8],
    [-5, 1, -3, 7], [11, 3, 5, -5], [-4, -4, -7, 1], [8, 8, 0, -11],
    [1, -4, -2, 3], [6, -3, -1, 5], [5, 8, 8, -3], [0, 2, 1, -3],
    [-12, -5, 1, 1], [4, 0, -5, -5], [-13, -6, -7, 0], [3, -4, 11, 5],
    [4, -4, -2, -10], [5, 6, 8, 3], [-5, -6, 7, -7], [-3, -1, -12, 2],
    [2, -3, -4, 4], [-6, 5, -3, 0], [-8, 4, 0, -1], [-5, -4, -10, 8],
    [0, 5, -6, -3], [-2, -2, -4, -12], [-2, 5, -2, -3], [-9, 6, -1, 11],
    [5, -6, 5, -1], [12, 11, -10, 6], [3, 8, -11, 5], [-7, 6, -11, -5],
    [-3, 6, -11, 5], [-8, -2, 4, -3], [-5, -2, 5, -4], [-5, -9, -7, 5],
    [0, -9, 6, 9], [5, 13, -1, 11], [6, -2, -1, -2], [13, 3, -1, 6],
    [-10, -4, -6, 0], [-5, -5, 9, -4], [-5, 0, 1, -9], [-3, -4, 2, -7],
    [-7, 6, -1, -4], [-3, 0, 1, -8], [-4, 3, -4, 0], [-11, 1, -1, -5],
    [-3, 7, -6, -4], [-7, -1, 11, -2], [-7, 1, -10, 1], [6, 3, 3, 6],
    [7, -2, -3, -10], [2, -7, 7, -2], [-3, -5, -10, 2], [1, -4, -6, 1],
    [-1, 0, 1, 9], [0, -8, 2, -2], [-1, 3, -2, 3], [-2, -3, 3, 5],
    [-1, 3, -1, -7], [-1, -5, -3, 4], [12, -4, 0, -5], [3, 1, 0, -5],
    [-3, 5, 8, 4], [5, 1, -1, 0], [-3, -3, 3, -5], [-1, -6, -5, 6],
    [-11, 10, 1, 5], [6, 8, -4, 2], [-2, -8, -9, 0], [-4, 0, 1, -2],
    [-4, -6, 2, 0], [1, 2, 9, -11], [2, 0, 5, 11], [-4, 5, 9, -3],
    [-9, 5, 9, -4], [-1, -1, -12, 2], [-8, 4, -2, 1], [12, -4, 2, 0],
    [-2, -3, -3, 2], [-3, 8, -1, 11], [8, -11, 2, 5], [-9, 7, 5, 11],
    [5, -2, -1, -5], [-11, 8, -4, -4], [-8, 1, -7, 4], [2, -7, 10, -3],
    [-6, -11, -6, 4], [9, -7, 6, 4], [-4, -4, 1, 7], [-4, -1, -1, -2],
    [-5, 2, 3, 0], [-11, 0, 6, 1], [9, 9, 2, 7], [7, 5, 5, 3],
    [4, 2, 0, -3], [-9, -1, -7, 5], [1, 1, 5, 4], [-1, 6, 6, 6],
    [4, -1, 3, -7], [0, 1, 4, 12], [5, 2, -2, -4], [-8, 3, 3, 3],
    [-6, 5, 2, 2], [-5, -6, 3, -4], [-3, -8, 7, -8], [-9, 8, 2, 3],
    [-6, 4, -6, 0], [4, 3, 0, 9], [-9, -3, 4, -8], [5, 6, -1, -7],
    [3, 4, -5, -7], [-1, 2, 2, 12], [-4, 7, -10, 3], [6, -3, -6, 7],
    [-1, 4, -1, 0], [3, 13, 1, -2], [1, 9, -1, 1], [-13, 8, 13, 4],
    [-7, 5, 2, -5], [6, -7, 2, 5], [-5, -3, -1, -3], [6, 3, -5, -9],
    [3, 5, -8, 13], [-3, -1, 9, -1], [-10, -6, 11, 2], [-3, 1, -10, 6],
    [4, 3, 1, -5], [-6, 4, -8, -12], [2, -2, 2, -3], [-4, 8, 1, -4],
    [-3, 1, 8, -5], [1, 4, -4, -5], [1, 1, 0, -9], [5, 9, 6, -1],
    [8, -4, 6, 5], [-3, 8, 2, -9], [8, -8, -8, -3], [1, 3, 1, -9],
    [-6, 3, 0, -6], [-4, -1, 10, 8], [-1, 4, -10, -11], [3, -8, -4, -6],
    [2, 6, 8, 8], [7, 8, -1, 9], [-3, -7, -10, 7], [-2, 7, -1, -3],
    [-1, -1, 0, 8], [2, 2, 6, -1], [0, -3, 1, 12], [-13, 1, 1, 1],
    [-3, -10, 6, 3], [-3, 6, 6, 8], [2, 0, -5, -4], [6, 2, 8, 13],
    [-11, -4, -9, 4], [-1, 3, 8, 10], [6, -9, -5, 3], [2, 7, 6, 1],
    [4, 4, 0, -2], [10, 3, 5, 7], [-12, 6, -5, -7], [-2, -2, 2, -2],
    [3, 2, -2, -1], [-1, -1, -1, 5], [13, 4, 3, 0], [9, -8, -7, 10],
    [2, 9, -7, 1], [4, -3, -3, -4], [5, -5, 0, -8], [2, -4, -10, -2],
    [5, 6, 5, -7], [0, -5, -9, 2], [-12, -6, -5, 6], [-4, -7, 2, 3],
    [-10, -4, 3, 5], [5, 4, -10, 5], [11, 8, -3, 0], [3, -4, 7, -4],
    [3, 11, 5, -3], [5, 3, 6, -7], [10, 4, 2, -7], [4, 2, -1, -7],
    [-7, -2, 4, -1], [-4, 4, -4, 5], [5, -1, -1, -8], [-4, 6, 3, 5],
    [-11, 8, -7, 0], [-3, -4, 9, -9], [3, -9, 0, -9], [4, 9, -4, -6],
    [-6, -2, -11, -8], [4, -1, 2, 7], [-4, 4, -1, 4], [-8, 6, -4, -4],
    [5, -6, 1, 0], [3, 3, -3, -8], [-12, 1, -3, 9], [-5, 0, 2, -3],
    [-7, -3, -2, 4], [-12, -7, 2, 3], [0, 1, 8, -3], [-1, -4, -3, 1],
    [8, 1, 6, -3], [10, -8, 9, 13], [-1, 4, -1, -8], [4, 5, -4, 1],
];

/// Radius, in pixels, that any rotated test location can reach.
pub(crate) const PATTERN_RADIUS: u32 = 19;

/// Computes the descriptor of a keypoint at integer level coordinates `(x, y)`.
/// `smoothed` must already be low-pass filtered. Samples outside the image are
/// clamped to the border.
pub(crate) fn describe(smoothed: &GrayImage, x: i64, y: i64, angle: f64) -> Descriptor {
    let (w, h) = smoothed.dimensions();
    let (sin, cos) = angle.sin_cos();
    let sample = |dx: i8, dy: i8| -> u8 {
        let (dx, dy) = (dx as f64, dy as f64);
        let rx = (dx * cos - dy * sin).round() as i64;
        let ry = (dx * sin + dy * cos).round() as i64;
        let px = (x + rx).clamp(0, w as i64 - 1) as u32;
        let py = (y + ry).clamp(0, h as i64 - 1) as u32;
        smoothed.get_pixel(px, py)[0]
    };
    let mut d = Descriptor::zero();
    for (bit, [x1, y1, x2, y2]) in SAMPLING_PATTERN.iter().enumerate() {
        if sample(*x1, *y1) < sample(*x2, *y2) {
            d.set_bit(bit);
        }
    }
    d
}
