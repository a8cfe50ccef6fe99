//! Local phase quantization over an oriented frequency-domain pyramid.
//!
//! Each band filter is `(i cos(phi - theta))^K * R_m(rho)` with `K` one less
//! than the orientation count and `R_m` a log-cosine radial window one octave
//! wide on either side of `pi / 2^m`. A low-pass residual covers the rest of
//! the spectrum below the coarsest band. Subbands stay at full resolution.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GrayImage, Payload, Template, TemplateKind};

pub const NTNU_ID: &str = "ntnu";

const CODES: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PyramidParams {
    pub scales: usize,
    pub orientations: usize,
    /// Odd LPQ window side in pixels.
    pub lpq_window: usize,
    /// Bits are set where the response exceeds this value.
    pub threshold: f64,
}

impl Default for PyramidParams {
    fn default() -> Self {
        Self {
            scales: 3,
            orientations: 12,
            lpq_window: 7,
            threshold: 0.0,
        }
    }
}

impl PyramidParams {
    /// LPQ frequency `1 / lpq_window`.
    pub fn lpq_a(&self) -> f64 {
        1.0 / self.lpq_window as f64
    }

    pub fn subband_count(&self) -> usize {
        self.scales * self.orientations + 1
    }

    fn validate(&self) -> Result<()> {
        if self.scales == 0 || self.orientations == 0 {
            return Err(Error::invalid("pyramid needs at least one scale and orientation"));
        }
        if self.lpq_window % 2 == 0 {
            return Err(Error::invalid(format!("LPQ window must be odd, got {}", self.lpq_window)));
        }
        if !self.threshold.is_finite() {
            return Err(Error::invalid("LPQ threshold must be finite"));
        }
        Ok(())
    }
}

/// Angular frequency of DFT index `k` for a length-`n` transform.
fn omega(k: usize, n: usize) -> f64 {
    let k = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    2.0 * PI * k / n as f64
}

/// Log-cosine window, 1 at `center` and 0 one octave away.
fn radial(rho: f64, center: f64) -> f64 {
    if rho <= 0.0 {
        return 0.0;
    }
    let t = (rho / center).log2();
    if t.abs() < 1.0 {
        (FRAC_PI_2 * t).cos()
    } else {
        0.0
    }
}

fn lowpass(rho: f64, coarsest: f64) -> f64 {
    let edge = coarsest / 2.0;
    if rho <= edge {
        1.0
    } else {
        radial(rho, edge)
    }
}

struct Fft2 {
    width: usize,
    height: usize,
    rows: std::sync::Arc<dyn Fft<f64>>,
    cols: std::sync::Arc<dyn Fft<f64>>,
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], width: usize, height: usize) {
    const TILE: usize = 32;
    for y0 in (0..height).step_by(TILE) {
        for x0 in (0..width).step_by(TILE) {
            for y in y0..(y0 + TILE).min(height) {
                for x in x0..(x0 + TILE).min(width) {
                    dst[x * height + y] = src[y * width + x];
                }
            }
        }
    }
}

impl Fft2 {
    fn new(width: usize, height: usize, inverse: bool) -> Self {
        let mut planner = FftPlanner::new();
        let (rows, cols) = if inverse {
            (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height))
        } else {
            (planner.plan_fft_forward(width), planner.plan_fft_forward(height))
        };
        Self { width, height, rows, cols }
    }

    /// In-place 2-D transform; `scratch` must match `buf` in length.
    fn process(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.rows.process(buf);
        transpose(buf, scratch, self.width, self.height);
        self.cols.process(scratch);
        transpose(scratch, buf, self.height, self.width);
    }
}

/// Band-pass gain for one (scale, orientation), or the residual when `None`.
#[derive(Clone, Copy)]
enum Band {
    Oriented { scale: usize, orientation: usize },
    Residual,
}

/// Calls `visit(index, band)` for every real subband, in (scale, orientation)
/// order followed by the residual. The filters are Hermitian and vanish at
/// Nyquist, so two subbands share one complex inverse transform.
fn for_each_subband(img: &GrayImage, p: &PyramidParams, mut visit: impl FnMut(usize, &[f64])) {
    let (w, h) = (img.width(), img.height());
    let mut spectrum: Vec<Complex64> = img.centered_f64().into_iter().map(|v| Complex64::new(v, 0.0)).collect();
    let mut scratch = vec![Complex64::new(0.0, 0.0); w * h];
    Fft2::new(w, h, false).process(&mut spectrum, &mut scratch);
    let inverse = Fft2::new(w, h, true);
    let norm = 1.0 / (w * h) as f64;

    let mut rho = Vec::with_capacity(w * h);
    let mut unit = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (wx, wy) = (omega(x, w), omega(y, h));
            let r = wx.hypot(wy);
            rho.push(r);
            unit.push(if r > 0.0 { (wx / r, wy / r) } else { (1.0, 0.0) });
        }
    }
    let radial_gain: Vec<Vec<f64>> = (1..=p.scales)
        .map(|m| {
            let center = PI / 2f64.powi(m as i32);
            rho.iter().map(|&r| radial(r, center)).collect()
        })
        .collect();
    let coarsest = PI / 2f64.powi(p.scales as i32);
    let order = p.orientations as i32 - 1;
    let steer = Complex64::i().powi(order);

    let directions: Vec<(f64, f64)> = (0..p.orientations)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / p.orientations as f64;
            (theta.cos(), theta.sin())
        })
        .collect();
    let gain = |band: Band, i: usize| -> Complex64 {
        match band {
            Band::Oriented { scale, orientation } => {
                let r = radial_gain[scale][i];
                if r == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let (c, s) = unit[i];
                let (ct, st) = directions[orientation];
                steer * ((c * ct + s * st).powi(order) * r)
            }
            Band::Residual => Complex64::new(lowpass(rho[i], coarsest), 0.0),
        }
    };

    let mut bands: Vec<Band> = (0..p.scales)
        .flat_map(|scale| (0..p.orientations).map(move |orientation| Band::Oriented { scale, orientation }))
        .collect();
    bands.push(Band::Residual);

    let mut buf = vec![Complex64::new(0.0, 0.0); w * h];
    let mut real = vec![0.0; w * h];
    for (pair, chunk) in bands.chunks(2).enumerate() {
        for (i, b) in buf.iter_mut().enumerate() {
            let g = match chunk {
                [a, b2] => gain(*a, i) + Complex64::i() * gain(*b2, i),
                [a] => gain(*a, i),
                _ => unreachable!(),
            };
            *b = spectrum[i] * g;
        }
        inverse.process(&mut buf, &mut scratch);
        real.iter_mut().zip(&buf).for_each(|(r, c)| *r = c.re * norm);
        visit(2 * pair, &real);
        if chunk.len() == 2 {
            real.iter_mut().zip(&buf).for_each(|(r, c)| *r = c.im * norm);
            visit(2 * pair + 1, &real);
        }
    }
}

#[cfg(test)]
pub(crate) fn subbands(img: &GrayImage, p: &PyramidParams) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for_each_subband(img, p, |_, band| out.push(band.to_vec()));
    out
}

/// 256-bin LPQ code histogram of one subband.
///
/// Window taps at `+d` and `-d` carry conjugate weights, so each pass sums
/// pairs: `sum_d w_d v_d = v_0 + sum_{d>0} cos_d (v_+ + v_-) - i sin_d (v_+ - v_-)`.
pub(crate) fn lpq_histogram(band: &[f64], width: usize, height: usize, p: &PyramidParams) -> Vec<u32> {
    let r = p.lpq_window / 2;
    let a = p.lpq_a();
    let (cos, sin): (Vec<f64>, Vec<f64>) = (1..=r).map(|d| ((2.0 * PI * a * d as f64).cos(), (2.0 * PI * a * d as f64).sin())).unzip();
    let offsets = |n: usize| -> Vec<Vec<(usize, usize)>> {
        // (index + d, index - d) with edge clamping, per position.
        (0..n)
            .map(|i| (1..=r).map(|d| ((i + d).min(n - 1), i.saturating_sub(d))).collect())
            .collect()
    };
    let (xs, ys) = (offsets(width), offsets(height));

    // Horizontal pass: box sum and first-frequency sum.
    let mut box_h = vec![0.0; band.len()];
    let mut freq_h = vec![Complex64::new(0.0, 0.0); band.len()];
    for y in 0..height {
        let row = &band[y * width..(y + 1) * width];
        for x in 0..width {
            let v0 = row[x];
            let (mut b, mut re, mut im) = (v0, v0, 0.0);
            for (k, &(xp, xm)) in xs[x].iter().enumerate() {
                let (vp, vm) = (row[xp], row[xm]);
                b += vp + vm;
                re += cos[k] * (vp + vm);
                im -= sin[k] * (vp - vm);
            }
            box_h[y * width + x] = b;
            freq_h[y * width + x] = Complex64::new(re, im);
        }
    }

    let mut hist = vec![0u32; CODES];
    for y in 0..height {
        for x in 0..width {
            let j0 = y * width + x;
            let f0 = freq_h[j0];
            let (mut f1, mut f2_re, mut f2_im) = (f0, box_h[j0], 0.0);
            let (mut even, mut odd) = (f0, Complex64::new(0.0, 0.0));
            for (k, &(yp, ym)) in ys[y].iter().enumerate() {
                let (jp, jm) = (yp * width + x, ym * width + x);
                let (fp, fm) = (freq_h[jp], freq_h[jm]);
                let (bp, bm) = (box_h[jp], box_h[jm]);
                f1 += fp + fm;
                f2_re += cos[k] * (bp + bm);
                f2_im -= sin[k] * (bp - bm);
                even += (fp + fm) * cos[k];
                odd += (fp - fm) * sin[k];
            }
            // w_d = cos_d - i sin_d (sign of d applied to sin).
            let f2 = Complex64::new(f2_re, f2_im);
            let f3 = even - Complex64::i() * odd;
            let f4 = even + Complex64::i() * odd;
            let parts = [f1.re, f2.re, f3.re, f4.re, f1.im, f2.im, f3.im, f4.im];
            let code = parts
                .iter()
                .enumerate()
                .fold(0usize, |c, (bit, &v)| if v > p.threshold { c | (1 << bit) } else { c });
            hist[code] += 1;
        }
    }
    hist
}

/// Concatenated per-subband LPQ histograms, dims `[subbands, 256]`.
pub fn extract_ntnu(img: &GrayImage, p: &PyramidParams) -> Result<Template> {
    p.validate()?;
    let (w, h) = (img.width(), img.height());
    if w < p.lpq_window || h < p.lpq_window {
        return Err(Error::invalid(format!("{w}x{h} subbands are smaller than the {} px LPQ window", p.lpq_window)));
    }
    let mut counts = vec![0u32; p.subband_count() * CODES];
    for_each_subband(img, p, |i, band| counts[i * CODES..(i + 1) * CODES].copy_from_slice(&lpq_histogram(band, w, h, p)));
    Template::new(
        NTNU_ID,
        TemplateKind::CodeHistogram,
        vec![p.subband_count() as u64, CODES as u64],
        Payload::Counts(counts),
    )
}
