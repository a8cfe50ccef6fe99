//! Key-point comparator: detection, CSV exchange and the pair-count score.

mod detect;
mod matching;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Payload, Template, TemplateKind, KEYPOINT_ROW};

pub use detect::detect_and_describe;
pub use matching::{match_pairs, match_score};

pub const SIFT_ID: &str = "sift";
pub const DESCRIPTOR_LEN: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    /// Radians.
    pub orientation: f64,
    pub descriptor: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    /// Nearest over second-nearest distance must fall below this.
    pub ratio_threshold: f64,
    /// Radians.
    pub angle_tolerance: f64,
    /// Fraction of the predominant match length.
    pub length_tolerance: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            ratio_threshold: 0.8,
            angle_tolerance: 0.35,
            length_tolerance: 0.25,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio_threshold > 0.0 && self.ratio_threshold < 1.0) {
            return Err(Error::invalid(format!("ratio threshold must be in (0, 1), got {}", self.ratio_threshold)));
        }
        if !(self.angle_tolerance >= 0.0 && self.angle_tolerance.is_finite()) {
            return Err(Error::invalid("angle tolerance must be non-negative"));
        }
        if !(self.length_tolerance >= 0.0 && self.length_tolerance.is_finite()) {
            return Err(Error::invalid("length tolerance must be non-negative"));
        }
        Ok(())
    }
}

fn check_row(k: &Keypoint) -> Result<()> {
    if k.descriptor.len() != DESCRIPTOR_LEN {
        return Err(Error::invalid(format!("descriptor has {} values, expected {DESCRIPTOR_LEN}", k.descriptor.len())));
    }
    let finite = [k.x, k.y, k.scale, k.orientation].iter().chain(&k.descriptor).all(|v| v.is_finite());
    if !finite {
        return Err(Error::NonFinite("key-point values must be finite".into()));
    }
    Ok(())
}

/// Packs key points into a `[n, 132]` key-point-set template.
pub fn to_template(kps: &[Keypoint]) -> Result<Template> {
    let mut values = Vec::with_capacity(kps.len() * KEYPOINT_ROW);
    for k in kps {
        check_row(k)?;
        values.extend_from_slice(&[k.x, k.y, k.scale, k.orientation]);
        values.extend_from_slice(&k.descriptor);
    }
    Template::new(
        SIFT_ID,
        TemplateKind::KeypointSet,
        vec![kps.len() as u64, KEYPOINT_ROW as u64],
        Payload::Real(values),
    )
}

pub fn from_template(t: &Template) -> Result<Vec<Keypoint>> {
    match (t.kind(), t.payload()) {
        (TemplateKind::KeypointSet, Payload::Real(v)) => Ok(v
            .chunks(KEYPOINT_ROW)
            .map(|r| Keypoint {
                x: r[0],
                y: r[1],
                scale: r[2],
                orientation: r[3],
                descriptor: r[4..].to_vec(),
            })
            .collect()),
        _ => Err(Error::KindMismatch {
            expected: TemplateKind::KeypointSet.name().into(),
            found: t.kind().name().into(),
        }),
    }
}

/// Reads `x,y,scale,orientation,d0..d127` rows with a header line.
pub fn read_keypoints_csv(reader: impl Read) -> Result<Vec<Keypoint>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = csv_header();
    if headers.len() != expected.len() || headers.iter().zip(&expected).any(|(a, b)| a.trim() != b) {
        return Err(Error::Parse {
            line: 1,
            message: "expected header x,y,scale,orientation,d0..d127".into(),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let vals = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
        let k = Keypoint {
            x: vals[0],
            y: vals[1],
            scale: vals[2],
            orientation: vals[3],
            descriptor: vals[4..].to_vec(),
        };
        check_row(&k).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        out.push(k);
    }
    Ok(out)
}

pub fn write_keypoints_csv(kps: &[Keypoint], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(csv_header())?;
    for k in kps {
        check_row(k)?;
        let row = [k.x, k.y, k.scale, k.orientation].into_iter().chain(k.descriptor.iter().copied());
        w.write_record(row.map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("<keypoint csv>", e))
}

fn csv_header() -> Vec<String> {
    ["x", "y", "scale", "orientation"]
        .iter()
        .map(|s| s.to_string())
        .chain((0..DESCRIPTOR_LEN).map(|i| format!("d{i}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GrayImage;
    use std::f64::consts::PI;

    fn kp(i: usize) -> Keypoint {
        Keypoint {
            x: i as f64 * 1.5,
            y: 2.25,
            scale: 3.0,
            orientation: 0.1 * i as f64,
            descriptor: (0..DESCRIPTOR_LEN).map(|j| ((i * 31 + j * 7) % 17) as f64 / 17.0).collect(),
        }
    }

    #[test]
    fn csv_round_trip() {
        let kps: Vec<_> = (0..5).map(kp).collect();
        let mut buf = Vec::new();
        write_keypoints_csv(&kps, &mut buf).unwrap();
        assert_eq!(read_keypoints_csv(buf.as_slice()).unwrap(), kps);
        let t = to_template(&kps).unwrap();
        assert_eq!(t.dims(), &[5, 132]);
        assert_eq!(from_template(&t).unwrap(), kps);
    }

    #[test]
    fn csv_errors_carry_line() {
        let mut buf = Vec::new();
        write_keypoints_csv(&[kp(0), kp(1)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen("2.25", "oops", 2);
        match read_keypoints_csv(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(read_keypoints_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn empty_set_is_a_valid_template() {
        let t = to_template(&[]).unwrap();
        assert!(from_template(&t).unwrap().is_empty());
    }

    fn scene(x: f64, y: f64) -> f64 {
        let blobs = [(30.0, 25.0, 9.0, 3.0, 0.3), (70.0, 40.0, 4.0, 8.0, -0.5), (45.0, 70.0, 6.0, 2.5, 1.1), (80.0, 78.0, 5.0, 2.0, 0.7)];
        let v: f64 = blobs
            .iter()
            .map(|&(bx, by, sa, sb, rot): &(f64, f64, f64, f64, f64)| {
                let (dx, dy) = (x - bx, y - by);
                let (u, w) = (dx * rot.cos() + dy * rot.sin(), -dx * rot.sin() + dy * rot.cos());
                (-(u * u / (2.0 * sa * sa) + w * w / (2.0 * sb * sb))).exp()
            })
            .sum();
        40.0 + 180.0 * v
    }

    #[test]
    fn rotation_shifts_orientations() {
        let (size, c) = (110usize, 54.5);
        let alpha: f64 = 0.6;
        let render = |angle: f64| {
            GrayImage::from_fn(size, size, |x, y| {
                let (dx, dy) = (x as f64 - c, y as f64 - c);
                let (sx, sy) = (dx * angle.cos() + dy * angle.sin(), -dx * angle.sin() + dy * angle.cos());
                scene(sx + c, sy + c).round().clamp(0.0, 255.0) as u8
            })
            .unwrap()
        };
        let a = detect_and_describe(&render(0.0)).unwrap();
        let b = detect_and_describe(&render(alpha)).unwrap();
        let mut checked = 0;
        let mut agree = 0;
        for k in &a {
            let (dx, dy) = (k.x - c, k.y - c);
            let (px, py) = (dx * alpha.cos() - dy * alpha.sin() + c, dx * alpha.sin() + dy * alpha.cos() + c);
            let near = b
                .iter()
                .filter(|m| (m.x - px).hypot(m.y - py) < 2.0 && (m.scale / k.scale - 1.0).abs() < 0.3)
                .min_by(|m, n| {
                    let da = (m.orientation - k.orientation - alpha).rem_euclid(2.0 * PI);
                    let db = (n.orientation - k.orientation - alpha).rem_euclid(2.0 * PI);
                    da.min(2.0 * PI - da).total_cmp(&db.min(2.0 * PI - db))
                });
            if let Some(m) = near {
                checked += 1;
                let d = (m.orientation - k.orientation - alpha).rem_euclid(2.0 * PI);
                if d.min(2.0 * PI - d) <= MatchParams::default().angle_tolerance {
                    agree += 1;
                }
            }
        }
        assert!(checked >= 3, "only {checked} corresponding key points");
        assert!(agree as f64 >= 0.8 * checked as f64, "{agree} of {checked}");
    }
}
