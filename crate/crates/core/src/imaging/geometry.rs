//! Rotation/scale/crop normalization of periocular images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GrayImage, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormalizationStyle {
    /// Eye-corner annotations; the corner distance is the scale reference.
    CornerBased,
    /// Sclera circle annotations; the sclera radius is the scale reference.
    ScleraBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub style: NormalizationStyle,
    pub target_scale: f64,
    /// Output size as (height, width).
    pub out_size: (usize, usize),
    /// How far above the crop centre the eye centre is placed.
    pub vertical_offset: f64,
}

impl NormalizationSpec {
    /// Corner distance 318 px, 613x701 crop, eye 56 px above centre.
    pub fn cross_eyed() -> Self {
        Self {
            style: NormalizationStyle::CornerBased,
            target_scale: 318.0,
            out_size: (613, 701),
            vertical_offset: 56.0,
        }
    }

    /// Sclera radius 145 px, 871x871 crop centred on the sclera.
    pub fn vssiris() -> Self {
        Self {
            style: NormalizationStyle::ScleraBased,
            target_scale: 145.0,
            out_size: (871, 871),
            vertical_offset: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.out_size.0 == 0 || self.out_size.1 == 0 {
            return Err(Error::invalid("output size must be positive"));
        }
        if !(self.target_scale > 0.0 && self.target_scale.is_finite()) {
            return Err(Error::invalid("target scale must be positive"));
        }
        Ok(())
    }

    /// Eye centre position in the normalized output.
    pub fn output_anchor(&self) -> Point {
        let (h, w) = self.out_size;
        ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0 - self.vertical_offset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Annotation {
    Corners { p1: Point, p2: Point },
    Sclera { center: Point, radius: f64 },
}

/// Similarity transform mapping input pixel coordinates to output coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    /// Eye centre in the input image.
    pub source_center: Point,
    /// Eye centre in the output image.
    pub target_center: Point,
    /// Rotation of the input that makes the reference axis horizontal (radians).
    pub angle: f64,
    pub scale: f64,
}

impl SimilarityTransform {
    pub fn forward(&self, p: Point) -> Point {
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let dx = p.0 - self.source_center.0;
        let dy = p.1 - self.source_center.1;
        // Rotate by -angle, then scale.
        (
            self.target_center.0 + self.scale * (c * dx + s * dy),
            self.target_center.1 + self.scale * (-s * dx + c * dy),
        )
    }

    pub fn inverse(&self, q: Point) -> Point {
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let u = (q.0 - self.target_center.0) / self.scale;
        let v = (q.1 - self.target_center.1) / self.scale;
        (self.source_center.0 + c * u - s * v, self.source_center.1 + s * u + c * v)
    }
}

/// Computes the composed rotate-scale-translate map for an annotation.
pub fn normalization_transform(img: &GrayImage, annotation: &Annotation, spec: &NormalizationSpec) -> Result<SimilarityTransform> {
    spec.validate()?;
    let inside = |p: Point| p.0 >= 0.0 && p.1 >= 0.0 && p.0 <= (img.width() - 1) as f64 && p.1 <= (img.height() - 1) as f64;
    let (source_center, angle, scale) = match (*annotation, spec.style) {
        (Annotation::Corners { p1, p2 }, NormalizationStyle::CornerBased) => {
            let (dx, dy) = (p2.0 - p1.0, p2.1 - p1.1);
            let dist = dx.hypot(dy);
            if !(dist > 1e-9) {
                return Err(Error::Degenerate("eye corners coincide".into()));
            }
            if !inside(p1) || !inside(p2) {
                return Err(Error::invalid("eye corners outside image"));
            }
            let center = ((p1.0 + p2.0) / 2.0, (p1.1 + p2.1) / 2.0);
            (center, dy.atan2(dx), spec.target_scale / dist)
        }
        (Annotation::Sclera { center, radius }, NormalizationStyle::ScleraBased) => {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(Error::Degenerate(format!("sclera radius {radius}")));
            }
            if !inside(center) {
                return Err(Error::invalid("sclera centre outside image"));
            }
            (center, 0.0, spec.target_scale / radius)
        }
        _ => return Err(Error::invalid("annotation does not match normalization style")),
    };
    Ok(SimilarityTransform {
        source_center,
        target_center: spec.output_anchor(),
        angle,
        scale,
    })
}

/// Rotates, rescales (bicubic) and crops an image to the normalized frame.
///
/// Samples falling outside the source replicate its edge pixels. The output
/// carries the eye anchor and `target_scale` as its scale reference.
pub fn normalize_geometry(img: &GrayImage, annotation: &Annotation, spec: &NormalizationSpec) -> Result<GrayImage> {
    let tf = normalization_transform(img, annotation, spec)?;
    let (h, w) = spec.out_size;
    let src = Plane::from_image(img);
    let out = GrayImage::from_fn(w, h, |x, y| {
        let (sx, sy) = tf.inverse((x as f64, y as f64));
        to_u8(src.bicubic(sx, sy))
    })?;
    out.with_geometry(tf.target_center, spec.target_scale)
}

/// Bicubic resize by a uniform factor; output size is `round(k * size)`.
pub fn resize(img: &GrayImage, factor: f64) -> Result<GrayImage> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::invalid("resize factor must be positive"));
    }
    let w = ((img.width() as f64 * factor).round() as usize).max(1);
    let h = ((img.height() as f64 * factor).round() as usize).max(1);
    let src = Plane::from_image(img);
    GrayImage::from_fn(w, h, |x, y| to_u8(src.bicubic(x as f64 / factor, y as f64 / factor)))
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Cubic convolution kernel with a = -0.5.
#[inline]
fn cubic_weight(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

struct Plane<'a> {
    img: &'a GrayImage,
}

impl<'a> Plane<'a> {
    fn from_image(img: &'a GrayImage) -> Self {
        Self { img }
    }

    fn bicubic(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let (fx, fy) = (x - x0, y - y0);
        let (xi, yi) = (x0 as isize, y0 as isize);
        if fx == 0.0 && fy == 0.0 {
            return self.img.get_clamped(xi, yi) as f64;
        }
        let wx = [cubic_weight(fx + 1.0), cubic_weight(fx), cubic_weight(1.0 - fx), cubic_weight(2.0 - fx)];
        let wy = [cubic_weight(fy + 1.0), cubic_weight(fy), cubic_weight(1.0 - fy), cubic_weight(2.0 - fy)];
        let mut acc = 0.0;
        for (j, wyj) in wy.iter().enumerate() {
            let row: f64 = wx
                .iter()
                .enumerate()
                .map(|(i, wxi)| wxi * self.img.get_clamped(xi - 1 + i as isize, yi - 1 + j as isize) as f64)
                .sum();
            acc += wyj * row;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth_image(w: usize, h: usize, period: f64) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let (xf, yf) = (x as f64 / period, y as f64 / period);
            (128.0 + 60.0 * (xf * 1.3).sin() * (yf * 0.9).cos() + 40.0 * ((xf + yf) * 0.7).sin()).round() as u8
        })
        .unwrap()
    }

    #[test]
    fn kernel_interpolates() {
        assert_eq!(cubic_weight(0.0), 1.0);
        assert_eq!(cubic_weight(1.0), 0.0);
        assert_eq!(cubic_weight(2.0), 0.0);
        let s: f64 = [1.3, 0.3, 0.7, 1.7].iter().map(|&t| cubic_weight(t)).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn horizontal_corners_318_apart_is_pure_crop() {
        let img = GrayImage::from_fn(900, 800, |x, y| ((x * 7 + y * 13) % 251) as u8).unwrap();
        let ann = Annotation::Corners {
            p1: (291.0, 400.0),
            p2: (609.0, 400.0),
        };
        let spec = NormalizationSpec::cross_eyed();
        let tf = normalization_transform(&img, &ann, &spec).unwrap();
        assert_eq!(tf.angle, 0.0);
        assert_eq!(tf.scale, 1.0);
        let out = normalize_geometry(&img, &ann, &spec).unwrap();
        assert_eq!((out.height(), out.width()), (613, 701));
        // Output anchor (350, 250) maps to input (450, 400).
        for (x, y) in [(0usize, 0usize), (350, 250), (700, 612), (123, 456)] {
            let sx = x as isize + 100;
            let sy = y as isize + 150;
            assert_eq!(out.get(x, y), img.get_clamped(sx, sy), "pixel ({x},{y})");
        }
        assert_eq!(out.anchor(), Some((350.0, 250.0)));
        assert_eq!(out.scale_ref(), Some(318.0));
    }

    #[test]
    fn sclera_radius_290_halves_the_image() {
        let img = GrayImage::filled(1200, 1200, 90).unwrap();
        let ann = Annotation::Sclera {
            center: (600.0, 600.0),
            radius: 290.0,
        };
        let tf = normalization_transform(&img, &ann, &NormalizationSpec::vssiris()).unwrap();
        assert_eq!(tf.scale, 0.5);
        let out = normalize_geometry(&img, &ann, &NormalizationSpec::vssiris()).unwrap();
        assert_eq!((out.height(), out.width()), (871, 871));
        assert_eq!(out.anchor(), Some((435.0, 435.0)));
        assert!(out.data().iter().all(|&v| v == 90));
    }

    #[test]
    fn corner_axis_becomes_horizontal() {
        let img = GrayImage::filled(800, 800, 10).unwrap();
        let d = 318.0 / 2f64.sqrt() * 0.8;
        let ann = Annotation::Corners {
            p1: (300.0, 300.0),
            p2: (300.0 + d, 300.0 + d),
        };
        let tf = normalization_transform(&img, &ann, &NormalizationSpec::cross_eyed()).unwrap();
        assert!((tf.angle - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        let Annotation::Corners { p1, p2 } = ann else { unreachable!() };
        let (q1, q2) = (tf.forward(p1), tf.forward(p2));
        assert!((q1.1 - q2.1).abs() < 0.5);
        assert!(((q2.0 - q1.0) - 318.0).abs() < 0.5);
        let mid = ((q1.0 + q2.0) / 2.0, (q1.1 + q2.1) / 2.0);
        assert!((mid.0 - 350.0).abs() < 1e-9 && (mid.1 - 250.0).abs() < 1e-9);
        let back = tf.inverse(q1);
        assert!((back.0 - p1.0).abs() < 1e-9 && (back.1 - p1.1).abs() < 1e-9);
    }

    #[test]
    fn degenerate_annotations() {
        let img = GrayImage::filled(100, 100, 0).unwrap();
        let spec = NormalizationSpec::cross_eyed();
        let same = Annotation::Corners {
            p1: (10.0, 10.0),
            p2: (10.0, 10.0),
        };
        assert!(matches!(normalize_geometry(&img, &same, &spec), Err(Error::Degenerate(_))));
        let zero = Annotation::Sclera {
            center: (50.0, 50.0),
            radius: 0.0,
        };
        assert!(matches!(
            normalize_geometry(&img, &zero, &NormalizationSpec::vssiris()),
            Err(Error::Degenerate(_))
        ));
        let sclera = Annotation::Sclera {
            center: (50.0, 50.0),
            radius: 10.0,
        };
        assert!(normalize_geometry(&img, &sclera, &spec).is_err());
    }

    #[test]
    fn output_dims_always_match_spec() {
        let img = smooth_image(150, 120, 9.0);
        for (i, ann) in [
            Annotation::Corners { p1: (10.0, 20.0), p2: (140.0, 100.0) },
            Annotation::Corners { p1: (140.0, 5.0), p2: (3.0, 110.0) },
        ]
        .iter()
        .enumerate()
        {
            let spec = NormalizationSpec {
                out_size: (31 + i, 47 - i),
                vertical_offset: 5.0,
                ..NormalizationSpec::cross_eyed()
            };
            let out = normalize_geometry(&img, ann, &spec).unwrap();
            assert_eq!((out.height(), out.width()), spec.out_size);
        }
    }

    #[test]
    fn scale_equivariance_within_two_levels_rms() {
        let base = smooth_image(400, 360, 14.0);
        let ann = Annotation::Corners {
            p1: (120.0, 170.0),
            p2: (280.0, 190.0),
        };
        let spec = NormalizationSpec {
            target_scale: 160.0,
            out_size: (201, 241),
            vertical_offset: 20.0,
            ..NormalizationSpec::cross_eyed()
        };
        let reference = normalize_geometry(&base, &ann, &spec).unwrap();
        for k in [0.5, 0.8, 1.25, 2.0] {
            let scaled = resize(&base, k).unwrap();
            let Annotation::Corners { p1, p2 } = ann else { unreachable!() };
            let ann_k = Annotation::Corners {
                p1: (p1.0 * k, p1.1 * k),
                p2: (p2.0 * k, p2.1 * k),
            };
            let out = normalize_geometry(&scaled, &ann_k, &spec).unwrap();
            let mse: f64 = out
                .data()
                .iter()
                .zip(reference.data())
                .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                .sum::<f64>()
                / out.data().len() as f64;
            assert!(mse.sqrt() <= 2.0, "k={k}: rms {}", mse.sqrt());
        }
    }
}
