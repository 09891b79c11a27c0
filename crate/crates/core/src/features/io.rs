//! Precomputed-feature text files.
//!
//! One keypoint per line, whitespace separated:
//! `frame_id u v octave angle response descriptor_hex`. Blank lines and lines
//! starting with `#` are ignored. Timestamps are not part of this format.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Descriptor, FeatureError, FeatureFrame, Keypoint};
use crate::geometry::PixelPoint;

fn parse_field<T: std::str::FromStr>(
    field: Option<&str>,
    name: &str,
    line: usize,
) -> Result<T, FeatureError> {
    let raw = field.ok_or_else(|| FeatureError::Parse {
        line,
        message: format!("missing field `{name}`"),
    })?;
    raw.parse().map_err(|_| FeatureError::Parse {
        line,
        message: format!("invalid {name} `{raw}`"),
    })
}

pub fn parse_features(text: &str) -> Result<BTreeMap<u64, FeatureFrame>, FeatureError> {
    let mut frames: BTreeMap<u64, FeatureFrame> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let frame_id: u64 = parse_field(fields.next(), "frame_id", line)?;
        let u: f64 = parse_field(fields.next(), "u", line)?;
        let v: f64 = parse_field(fields.next(), "v", line)?;
        let octave: u32 = parse_field(fields.next(), "octave", line)?;
        let angle: f64 = parse_field(fields.next(), "angle", line)?;
        let response: f64 = parse_field(fields.next(), "response", line)?;
        let hex = fields.next().ok_or_else(|| FeatureError::Parse {
            line,
            message: "missing field `descriptor`".into(),
        })?;
        let descriptor = Descriptor::from_hex(hex).ok_or_else(|| FeatureError::Parse {
            line,
            message: "descriptor must be 64 hex characters".into(),
        })?;
        if fields.next().is_some() {
            return Err(FeatureError::Parse {
                line,
                message: "trailing fields".into(),
            });
        }
        if !(u.is_finite() && v.is_finite() && angle.is_finite() && response.is_finite()) {
            return Err(FeatureError::Parse {
                line,
                message: "non-finite value".into(),
            });
        }
        let keypoint = Keypoint {
            position: PixelPoint::new(u, v),
            octave,
            angle,
            response,
        };
        frames
            .entry(frame_id)
            .or_insert_with(|| FeatureFrame::new(frame_id, 0.0))
            .push(keypoint, descriptor);
    }
    Ok(frames)
}

pub fn read_features_file(path: &Path) -> Result<BTreeMap<u64, FeatureFrame>, FeatureError> {
    parse_features(&fs::read_to_string(path)?)
}

pub fn format_features<'a>(frames: impl IntoIterator<Item = &'a FeatureFrame>) -> String {
    let mut out = String::new();
    for frame in frames {
        for (k, d) in frame.keypoints.iter().zip(&frame.descriptors) {
            out.push_str(&format!(
                "{} {} {} {} {} {} {}\n",
                frame.frame_id,
                k.position.u,
                k.position.v,
                k.octave,
                k.angle,
                k.response,
                d.to_hex()
            ));
        }
    }
    out
}

pub fn write_features_file<'a>(
    path: &Path,
    frames: impl IntoIterator<Item = &'a FeatureFrame>,
) -> Result<(), FeatureError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(format_features(frames).as_bytes())?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_records_and_comments() {
        let hex = "ff".repeat(32);
        let text = format!("# header\n\n3 10.5 20.25 1 0.5 42 {hex}\n3 1 2 0 0 1 {hex}\n1 5 6 0 0 1 {hex}\n");
        let frames = parse_features(&text).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[&3].len(), 2);
        assert_eq!(frames[&3].keypoints[0].position, PixelPoint::new(10.5, 20.25));
        assert_eq!(frames[&3].descriptors[0], Descriptor::ones());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "# c\n1 2 3 0 0 1 abcd\n";
        match parse_features(text) {
            Err(FeatureError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse_features("1 x 3 0 0 1") {
            Err(FeatureError::Parse { line, message }) => {
                assert_eq!(line, 1);
                assert!(message.contains('u'));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn write_then_parse() {
        let mut f = FeatureFrame::new(7, 0.0);
        let mut d = Descriptor::zero();
        d.set_bit(200);
        f.push(
            Keypoint {
                position: PixelPoint::new(0.1 + 0.2, 1.0 / 3.0),
                octave: 2,
                angle: 6.1,
                response: 17.0,
            },
            d,
        );
        let back = parse_features(&format_features([&f])).unwrap();
        assert_eq!(back[&7], f);
    }
}
