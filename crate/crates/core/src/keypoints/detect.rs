//! Difference-of-Gaussians key-point detector with gradient-histogram descriptors.

use std::f64::consts::PI;

use super::{Keypoint, DESCRIPTOR_LEN};
use crate::descriptors::filters::{filter_cols, filter_rows, gaussian_kernel};
use crate::error::{Error, Result};
use crate::model::GrayImage;

const OCTAVES: usize = 4;
const LAYERS: usize = 3;
const SIGMA0: f64 = 1.6;
/// Blur assumed to be present in the input image.
const INPUT_SIGMA: f64 = 0.5;
const CONTRAST: f64 = 0.03;
const EDGE_RATIO: f64 = 10.0;
const BORDER: usize = 5;
const MIN_OCTAVE_SIDE: usize = 2 * BORDER + 3;
const ORI_BINS: usize = 36;
const ORI_PEAK_RATIO: f64 = 0.8;
const DESC_WIDTH: usize = 4;
const DESC_BINS: usize = 8;
const DESC_CLIP: f64 = 0.2;

#[derive(Clone)]
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Plane {
    #[inline]
    fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.w + x]
    }

    fn blur(&self, sigma: f64) -> Plane {
        let k = gaussian_kernel(sigma);
        let data = filter_cols(&filter_rows(&self.data, self.w, self.h, &k), self.w, self.h, &k);
        Plane { data, ..*self }
    }

    fn downsample(&self) -> Plane {
        let (w, h) = (self.w / 2, self.h / 2);
        let data = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| self.at(2 * x, 2 * y)).collect();
        Plane { w, h, data }
    }

    fn gradient(&self, x: usize, y: usize) -> (f64, f64) {
        (self.at(x + 1, y) - self.at(x - 1, y), self.at(x, y + 1) - self.at(x, y - 1))
    }
}

/// Detects DoG extrema and describes them with 4x4x8 orientation histograms.
///
/// Coordinates and scales are in input pixels. Fewer than four octaves are
/// used when the image is too small for all of them.
pub fn detect_and_describe(img: &GrayImage) -> Result<Vec<Keypoint>> {
    if img.width().min(img.height()) < MIN_OCTAVE_SIDE {
        return Err(Error::invalid(format!(
            "{}x{} image is too small for key-point detection (need {MIN_OCTAVE_SIDE} px per side)",
            img.width(),
            img.height()
        )));
    }
    let k = 2f64.powf(1.0 / LAYERS as f64);
    let layer_sigma = |i: usize| SIGMA0 * k.powi(i as i32);
    let mut base = Plane {
        w: img.width(),
        h: img.height(),
        data: img.data().iter().map(|&v| v as f64 / 255.0).collect(),
    }
    .blur((SIGMA0 * SIGMA0 - INPUT_SIGMA * INPUT_SIGMA).sqrt());

    let mut out = Vec::new();
    for octave in 0..OCTAVES {
        if base.w.min(base.h) < MIN_OCTAVE_SIDE {
            break;
        }
        let mut gauss = vec![base.clone()];
        for i in 1..LAYERS + 3 {
            let inc = (layer_sigma(i).powi(2) - layer_sigma(i - 1).powi(2)).sqrt();
            let next = gauss[i - 1].blur(inc);
            gauss.push(next);
        }
        let dog: Vec<Plane> = gauss
            .windows(2)
            .map(|g| Plane {
                data: g[1].data.iter().zip(&g[0].data).map(|(a, b)| a - b).collect(),
                ..g[0]
            })
            .collect();
        let factor = (1usize << octave) as f64;
        for layer in 1..=LAYERS {
            for y in BORDER..base.h - BORDER {
                for x in BORDER..base.w - BORDER {
                    if !is_extremum(&dog, layer, x, y) {
                        continue;
                    }
                    let Some((ox, oy, os)) = refine(&dog, layer, x, y) else {
                        continue;
                    };
                    let sigma = SIGMA0 * k.powf(layer as f64 + os);
                    let g = &gauss[layer];
                    for orientation in orientations(g, x, y, sigma) {
                        if let Some(descriptor) = describe(g, x as f64 + ox, y as f64 + oy, sigma, orientation) {
                            out.push(Keypoint {
                                x: (x as f64 + ox) * factor,
                                y: (y as f64 + oy) * factor,
                                scale: sigma * factor,
                                orientation,
                                descriptor,
                            });
                        }
                    }
                }
            }
        }
        base = gauss[LAYERS].downsample();
    }
    Ok(out)
}

fn is_extremum(dog: &[Plane], layer: usize, x: usize, y: usize) -> bool {
    let v = dog[layer].at(x, y);
    if v.abs() < 0.5 * CONTRAST {
        return false;
    }
    let mut above = true;
    let mut below = true;
    for d in &dog[layer - 1..=layer + 1] {
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                if std::ptr::eq(d, &dog[layer]) && nx == x && ny == y {
                    continue;
                }
                let n = d.at(nx, ny);
                above &= v > n;
                below &= v < n;
            }
        }
        if !above && !below {
            return false;
        }
    }
    above || below
}

/// One quadratic fit in (x, y, scale); rejects weak, unstable and edge-like points.
fn refine(dog: &[Plane], layer: usize, x: usize, y: usize) -> Option<(f64, f64, f64)> {
    let (p, c, n) = (&dog[layer - 1], &dog[layer], &dog[layer + 1]);
    let v = c.at(x, y);
    let g = [
        (c.at(x + 1, y) - c.at(x - 1, y)) / 2.0,
        (c.at(x, y + 1) - c.at(x, y - 1)) / 2.0,
        (n.at(x, y) - p.at(x, y)) / 2.0,
    ];
    let dxx = c.at(x + 1, y) + c.at(x - 1, y) - 2.0 * v;
    let dyy = c.at(x, y + 1) + c.at(x, y - 1) - 2.0 * v;
    let dss = n.at(x, y) + p.at(x, y) - 2.0 * v;
    let dxy = (c.at(x + 1, y + 1) - c.at(x - 1, y + 1) - c.at(x + 1, y - 1) + c.at(x - 1, y - 1)) / 4.0;
    let dxs = (n.at(x + 1, y) - n.at(x - 1, y) - p.at(x + 1, y) + p.at(x - 1, y)) / 4.0;
    let dys = (n.at(x, y + 1) - n.at(x, y - 1) - p.at(x, y + 1) + p.at(x, y - 1)) / 4.0;
    let hess = [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]];
    let off = solve3(hess, g.map(|v| -v))?;
    if off.iter().any(|o| o.abs() > 1.0) {
        return None;
    }
    let contrast = v + 0.5 * (g[0] * off[0] + g[1] * off[1] + g[2] * off[2]);
    if contrast.abs() < CONTRAST {
        return None;
    }
    let (tr, det) = (dxx + dyy, dxx * dyy - dxy * dxy);
    if det <= 0.0 || tr * tr * EDGE_RATIO >= (EDGE_RATIO + 1.0).powi(2) * det {
        return None;
    }
    Some((off[0], off[1], off[2]))
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det3 = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det3(m);
    if d.abs() < 1e-15 {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, o) in out.iter_mut().enumerate() {
        let mut mc = m;
        for r in 0..3 {
            mc[r][col] = b[r];
        }
        *o = det3(mc) / d;
    }
    Some(out)
}

/// Dominant gradient directions around a point, in radians within [0, 2pi).
fn orientations(g: &Plane, x: usize, y: usize, sigma: f64) -> Vec<f64> {
    let wsigma = 1.5 * sigma;
    let radius = (3.0 * wsigma).round() as isize;
    let mut hist = [0.0; ORI_BINS];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (px, py) = (x as isize + dx, y as isize + dy);
            if px < 1 || py < 1 || px >= g.w as isize - 1 || py >= g.h as isize - 1 {
                continue;
            }
            let (gx, gy) = g.gradient(px as usize, py as usize);
            let weight = (-((dx * dx + dy * dy) as f64) / (2.0 * wsigma * wsigma)).exp();
            let angle = gy.atan2(gx).rem_euclid(2.0 * PI);
            let bin = ((angle / (2.0 * PI) * ORI_BINS as f64) as usize) % ORI_BINS;
            hist[bin] += weight * gx.hypot(gy);
        }
    }
    let smooth: Vec<f64> = (0..ORI_BINS)
        .map(|b| 0.25 * hist[(b + ORI_BINS - 1) % ORI_BINS] + 0.5 * hist[b] + 0.25 * hist[(b + 1) % ORI_BINS])
        .collect();
    let max = smooth.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    (0..ORI_BINS)
        .filter_map(|b| {
            let (l, c, r) = (smooth[(b + ORI_BINS - 1) % ORI_BINS], smooth[b], smooth[(b + 1) % ORI_BINS]);
            if c < ORI_PEAK_RATIO * max || c <= l || c <= r {
                return None;
            }
            let shift = 0.5 * (l - r) / (l - 2.0 * c + r);
            Some(((b as f64 + 0.5 + shift) * 2.0 * PI / ORI_BINS as f64).rem_euclid(2.0 * PI))
        })
        .collect()
}

/// Rotation-normalized 4x4x8 gradient histogram with trilinear binning.
fn describe(g: &Plane, x: f64, y: f64, sigma: f64, orientation: f64) -> Option<Vec<f64>> {
    let d = DESC_WIDTH as f64;
    let hist_width = 3.0 * sigma;
    let radius = (hist_width * std::f64::consts::SQRT_2 * (d + 1.0) * 0.5).round() as isize;
    let (cos, sin) = (orientation.cos(), orientation.sin());
    let (cx, cy) = (x.round() as isize, y.round() as isize);
    let mut hist = vec![0.0; DESCRIPTOR_LEN];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (px, py) = (cx + dx, cy + dy);
            if px < 1 || py < 1 || px >= g.w as isize - 1 || py >= g.h as isize - 1 {
                continue;
            }
            let (rx, ry) = (px as f64 - x, py as f64 - y);
            let xr = (rx * cos + ry * sin) / hist_width;
            let yr = (-rx * sin + ry * cos) / hist_width;
            let (cbin, rbin) = (xr + d / 2.0 - 0.5, yr + d / 2.0 - 0.5);
            if cbin <= -1.0 || rbin <= -1.0 || cbin >= d || rbin >= d {
                continue;
            }
            let (gx, gy) = g.gradient(px as usize, py as usize);
            let mag = gx.hypot(gy) * (-(xr * xr + yr * yr) / (2.0 * (0.5 * d).powi(2))).exp();
            let obin = (gy.atan2(gx) - orientation).rem_euclid(2.0 * PI) / (2.0 * PI) * DESC_BINS as f64;
            let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
            let (fr, fc, fo) = (rbin - r0, cbin - c0, obin - o0);
            for (ri, wr) in [(r0 as isize, 1.0 - fr), (r0 as isize + 1, fr)] {
                if ri < 0 || ri >= DESC_WIDTH as isize {
                    continue;
                }
                for (ci, wc) in [(c0 as isize, 1.0 - fc), (c0 as isize + 1, fc)] {
                    if ci < 0 || ci >= DESC_WIDTH as isize {
                        continue;
                    }
                    for (oi, wo) in [(o0 as usize, 1.0 - fo), (o0 as usize + 1, fo)] {
                        let idx = (ri as usize * DESC_WIDTH + ci as usize) * DESC_BINS + oi % DESC_BINS;
                        hist[idx] += mag * wr * wc * wo;
                    }
                }
            }
        }
    }
    let norm = |h: &[f64]| h.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n = norm(&hist);
    if n <= 0.0 {
        return None;
    }
    hist.iter_mut().for_each(|v| *v = (*v / n).min(DESC_CLIP));
    let n = norm(&hist);
    hist.iter_mut().for_each(|v| *v /= n);
    Some(hist)
}
