//! Block-wise Gabor, LBP and HOG descriptors.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::grid::{BlockRect, GaborGrid};
use crate::error::Result;
use crate::model::{GrayImage, Template};

pub const GABOR_ID: &str = "gabor";
pub const LBP_ID: &str = "lbp";
pub const HOG_ID: &str = "hog";

const HIST_BINS: usize = 8;

/// Divides by the sum; an all-zero vector becomes uniform.
pub(crate) fn to_pdf(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    } else if !v.is_empty() {
        let u = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x = u);
    }
}

/// Scales to unit L2 norm; an all-zero vector becomes uniform.
fn l2_normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    } else {
        let u = 1.0 / (v.len() as f64).sqrt();
        v.iter_mut().for_each(|x| *x = u);
    }
}

/// Zero-mean complex Gabor kernel on a square support of side `2r+1`.
struct GaborKernel {
    radius: isize,
    taps: Vec<Complex64>,
}

impl GaborKernel {
    fn new(wavelength: f64, theta: f64) -> Self {
        let sigma = 0.56 * wavelength;
        let radius = (3.0 * sigma).ceil() as isize;
        let (c, s) = (theta.cos(), theta.sin());
        let mut env = Vec::new();
        let mut wave = Vec::new();
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let (x, y) = (dx as f64, dy as f64);
                env.push((-(x * x + y * y) / (2.0 * sigma * sigma)).exp());
                wave.push(Complex64::from_polar(1.0, 2.0 * PI * (x * c + y * s) / wavelength));
            }
        }
        // Remove the DC response so flat regions give nothing.
        let env_sum: f64 = env.iter().sum();
        let dc = env.iter().zip(&wave).map(|(e, w)| w * e).sum::<Complex64>() / env_sum;
        let taps = env.iter().zip(&wave).map(|(e, w)| (w - dc) * e).collect();
        Self { radius, taps }
    }

    fn response(&self, img: &[f64], width: usize, height: usize, (cx, cy): (usize, usize)) -> Complex64 {
        let side = 2 * self.radius + 1;
        let mut acc = Complex64::new(0.0, 0.0);
        for dy in -self.radius..=self.radius {
            let y = (cy as isize + dy).clamp(0, height as isize - 1) as usize;
            let row = &img[y * width..(y + 1) * width];
            let taps = &self.taps[((dy + self.radius) * side) as usize..][..side as usize];
            for (dx, t) in (-self.radius..=self.radius).zip(taps) {
                let x = (cx as isize + dx).clamp(0, width as isize - 1) as usize;
                acc += t * row[x];
            }
        }
        acc
    }
}

/// Gabor magnitudes at every active block centre, PDF-normalized.
///
/// Order is block-major, then wavelength, then orientation.
pub fn extract_gabor(img: &GrayImage, grid: &GaborGrid) -> Result<Template> {
    grid.check(img)?;
    let kernels: Vec<GaborKernel> = grid
        .wavelengths
        .iter()
        .flat_map(|&l| (0..grid.orientations).map(move |k| GaborKernel::new(l, k as f64 * PI / grid.orientations as f64)))
        .collect();
    let data = img.centered_f64();
    let (w, h) = (img.width(), img.height());
    let mut values: Vec<f64> = grid
        .active_blocks()
        .iter()
        .flat_map(|b| kernels.iter().map(|k| k.response(&data, w, h, b.center()).norm()).collect::<Vec<_>>())
        .collect();
    to_pdf(&mut values);
    Template::real(GABOR_ID, values)
}

/// Per-block 8-bin histograms, L2-normalized per block and PDF-normalized overall.
fn block_histograms(img: &GrayImage, grid: &GaborGrid, id: &str, fill: impl Fn(&BlockRect, &mut [f64; HIST_BINS])) -> Result<Template> {
    grid.check(img)?;
    let mut values = Vec::with_capacity(grid.active_count() * HIST_BINS);
    for b in grid.active_blocks() {
        let mut hist = [0.0; HIST_BINS];
        fill(&b, &mut hist);
        l2_normalize(&mut hist);
        values.extend_from_slice(&hist);
    }
    to_pdf(&mut values);
    Template::real(id, values)
}

/// 8-neighbour radius-1 LBP code; a neighbour sets its bit when strictly brighter.
fn lbp_code(img: &GrayImage, x: usize, y: usize) -> u8 {
    const NEIGHBOURS: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)];
    let c = img.get(x, y);
    let (x, y) = (x as isize, y as isize);
    NEIGHBOURS
        .iter()
        .enumerate()
        .fold(0u8, |code, (bit, &(dx, dy))| if img.get_clamped(x + dx, y + dy) > c { code | (1 << bit) } else { code })
}

/// LBP codes quantized uniformly into 8 bins per block.
pub fn extract_lbp(img: &GrayImage, grid: &GaborGrid) -> Result<Template> {
    block_histograms(img, grid, LBP_ID, |b, hist| {
        for y in b.y0..b.y1 {
            for x in b.x0..b.x1 {
                hist[(lbp_code(img, x, y) / 32) as usize] += 1.0;
            }
        }
    })
}

/// Magnitude-weighted histograms of unsigned gradient orientation.
pub fn extract_hog(img: &GrayImage, grid: &GaborGrid) -> Result<Template> {
    block_histograms(img, grid, HOG_ID, |b, hist| {
        for y in b.y0..b.y1 {
            for x in b.x0..b.x1 {
                let (xi, yi) = (x as isize, y as isize);
                let gx = img.get_clamped(xi + 1, yi) as f64 - img.get_clamped(xi - 1, yi) as f64;
                let gy = img.get_clamped(xi, yi + 1) as f64 - img.get_clamped(xi, yi - 1) as f64;
                let mag = gx.hypot(gy);
                if mag == 0.0 {
                    continue;
                }
                let theta = gy.atan2(gx).rem_euclid(PI);
                let bin = ((theta / PI * HIST_BINS as f64) as usize).min(HIST_BINS - 1);
                hist[bin] += mag;
            }
        }
    })
}
