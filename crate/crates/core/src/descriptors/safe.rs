//! Symmetry-assessment descriptor (SAFE).
//!
//! The orientation image `(f_x + i f_y)^2` at each scale is projected onto
//! harmonic filters `exp(i n phi)` restricted to concentric rings around the
//! eye centre. Rings are log-spaced between the inner and outer radius.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::filters::{filter_cols, filter_rows, gaussian_derivative_kernel, gaussian_kernel};
use crate::error::{Error, Result};
use crate::model::{GrayImage, Payload, Template, TemplateKind};

pub const SAFE_ID: &str = "safe";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafeParams {
    pub scales: usize,
    pub sigma0: f64,
    /// Ratio between consecutive scales.
    pub k: f64,
    pub rings: usize,
    pub harmonics: usize,
    pub inner_radius: f64,
    /// Defaults to the distance from the anchor to the nearest image border.
    pub outer_radius: Option<f64>,
}

impl SafeParams {
    fn with_inner(inner_radius: f64) -> Self {
        Self {
            scales: 6,
            sigma0: 1.6,
            k: 2f64.powf(1.0 / 3.0),
            rings: 3,
            harmonics: 9,
            inner_radius,
            outer_radius: None,
        }
    }

    pub fn cross_eyed() -> Self {
        Self::with_inner(79.0)
    }

    pub fn vssiris() -> Self {
        Self::with_inner(145.0)
    }

    /// Harmonic orders, centred on zero.
    pub fn orders(&self) -> Vec<i32> {
        let lo = -(self.harmonics as i32 / 2);
        (0..self.harmonics as i32).map(|i| lo + i).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.scales == 0 || self.rings == 0 || self.harmonics == 0 {
            return Err(Error::invalid("SAFE needs at least one scale, ring and harmonic"));
        }
        if !(self.sigma0 > 0.0 && self.k >= 1.0) {
            return Err(Error::invalid("SAFE scale parameters must be positive"));
        }
        if !(self.inner_radius >= 0.0) {
            return Err(Error::invalid("inner radius must be non-negative"));
        }
        Ok(())
    }
}

/// Raw projection: coefficients in (scale, ring, harmonic) order and, for each
/// (scale, ring), the mean orientation magnitude over the ring.
pub(crate) struct Projection {
    pub coeffs: Vec<Complex64>,
    #[cfg_attr(not(test), allow(dead_code))]
    pub ring_mass: Vec<f64>,
}

pub(crate) fn project(img: &GrayImage, p: &SafeParams) -> Result<Projection> {
    p.validate()?;
    let (ax, ay) = img.anchor().ok_or_else(|| Error::invalid("SAFE needs an image with an anchor"))?;
    let (w, h) = (img.width() as f64, img.height() as f64);
    let half_extent = ax.min(ay).min(w - 1.0 - ax).min(h - 1.0 - ay);
    if !(half_extent > 0.0) {
        return Err(Error::invalid("anchor lies outside the image"));
    }
    let outer = p.outer_radius.unwrap_or(half_extent);
    if p.inner_radius >= half_extent || p.inner_radius >= outer {
        return Err(Error::invalid(format!(
            "inner radius {} must be below the outer radius {} and the half extent {half_extent}",
            p.inner_radius,
            outer.min(half_extent)
        )));
    }
    let edges: Vec<f64> = (0..=p.rings)
        .map(|f| {
            if p.inner_radius > 0.0 {
                p.inner_radius * (outer / p.inner_radius).powf(f as f64 / p.rings as f64)
            } else {
                outer * f as f64 / p.rings as f64
            }
        })
        .collect();

    // Work on a window around the outer ring with room for the filters.
    let sigma_max = p.sigma0 * p.k.powi(p.scales as i32 - 1);
    let margin = (8.0 * sigma_max).ceil() + 2.0;
    let clip = |v: f64, hi: f64| v.clamp(0.0, hi - 1.0) as usize;
    let (x0, x1) = (clip((ax - outer - margin).floor(), w), clip((ax + outer + margin).ceil(), w));
    let (y0, y1) = (clip((ay - outer - margin).floor(), h), clip((ay + outer + margin).ceil(), h));
    let (rw, rh) = (x1 - x0 + 1, y1 - y0 + 1);
    let full = img.centered_f64();
    let roi: Vec<f64> = (y0..=y1).flat_map(|y| full[y * img.width() + x0..][..rw].iter().copied()).collect();

    // Ring index, unit phase and pixel index of every pixel inside the annulus.
    let mut members: Vec<(usize, usize, Complex64)> = Vec::new();
    let mut ring_count = vec![0usize; p.rings];
    for y in 0..rh {
        for x in 0..rw {
            let (dx, dy) = ((x + x0) as f64 - ax, (y + y0) as f64 - ay);
            let r = dx.hypot(dy);
            if r < edges[0] || r > edges[p.rings] {
                continue;
            }
            let f = edges[1..].iter().position(|&e| r <= e).unwrap_or(p.rings - 1);
            ring_count[f] += 1;
            members.push((f, y * rw + x, Complex64::new(dx, dy) / r));
        }
    }
    if ring_count.contains(&0) {
        return Err(Error::invalid("a SAFE ring contains no pixels"));
    }

    let orders = p.orders();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); p.scales * p.rings * orders.len()];
    let mut ring_mass = vec![0.0; p.scales * p.rings];
    for s in 0..p.scales {
        let sigma = p.sigma0 * p.k.powi(s as i32);
        let (g, dg) = (gaussian_kernel(sigma), gaussian_derivative_kernel(sigma));
        let fx = filter_cols(&filter_rows(&roi, rw, rh, &dg), rw, rh, &g);
        let fy = filter_cols(&filter_rows(&roi, rw, rh, &g), rw, rh, &dg);
        let z: Vec<Complex64> = fx.iter().zip(&fy).map(|(&a, &b)| Complex64::new(a, b).powi(2)).collect();
        let gc: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let z = filter_cols(&filter_rows(&z, rw, rh, &gc), rw, rh, &gc);

        for &(f, i, u) in &members {
            let base = (s * p.rings + f) * orders.len();
            ring_mass[s * p.rings + f] += z[i].norm();
            // u^(-n) for ascending n, one conjugate multiply per order.
            let mut w = z[i] * u.powi(-orders[0]);
            for c in &mut coeffs[base..base + orders.len()] {
                *c += w;
                w *= u.conj();
            }
        }
        for f in 0..p.rings {
            let n = ring_count[f] as f64;
            ring_mass[s * p.rings + f] /= n;
            let base = (s * p.rings + f) * orders.len();
            coeffs[base..base + orders.len()].iter_mut().for_each(|c| *c /= n);
        }
    }
    Ok(Projection { coeffs, ring_mass })
}

/// SAFE template with dims `[scales, rings, harmonics]`.
pub fn extract_safe(img: &GrayImage, p: &SafeParams) -> Result<Template> {
    let proj = project(img, p)?;
    Template::new(
        SAFE_ID,
        TemplateKind::ComplexVector,
        vec![p.scales as u64, p.rings as u64, p.harmonics as u64],
        Payload::Complex(proj.coeffs),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params() -> SafeParams {
        SafeParams {
            scales: 2,
            inner_radius: 8.0,
            ..SafeParams::cross_eyed()
        }
    }

    fn circles(size: usize) -> GrayImage {
        let c = (size as f64 - 1.0) / 2.0;
        GrayImage::from_fn(size, size, |x, y| {
            let r = (x as f64 - c).hypot(y as f64 - c);
            (128.0 + 100.0 * (2.0 * PI * r / 9.0).cos()).round() as u8
        })
        .unwrap()
        .with_geometry((c, c), 20.0)
        .unwrap()
    }

    #[test]
    fn dims_and_orders() {
        let p = SafeParams::cross_eyed();
        assert_eq!(p.orders(), vec![-4, -3, -2, -1, 0, 1, 2, 3, 4]);
        let img = circles(81);
        let t = extract_safe(&img, &SafeParams { inner_radius: 10.0, ..p }).unwrap();
        assert_eq!(t.dims(), &[6, 3, 9]);
        assert_eq!(t.payload().len(), 162);
    }

    #[test]
    fn constant_image_gives_zeros() {
        let img = GrayImage::filled(61, 61, 140).unwrap().with_geometry((30.0, 30.0), 10.0).unwrap();
        let proj = project(&img, &params()).unwrap();
        assert!(proj.coeffs.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn concentric_circles_excite_second_order() {
        let img = circles(81);
        let p = params();
        let proj = project(&img, &p).unwrap();
        let orders = p.orders();
        for ring in proj.coeffs.chunks(orders.len()) {
            let best = ring.iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())).unwrap().0;
            assert_eq!(orders[best], 2);
        }
    }

    #[test]
    fn coefficients_bounded_by_ring_mass() {
        let img = GrayImage::from_fn(71, 65, |x, y| ((x * 13 + y * 29 + x * y) % 256) as u8)
            .unwrap()
            .with_geometry((35.0, 31.0), 10.0)
            .unwrap();
        let p = params();
        let proj = project(&img, &p).unwrap();
        for (ring, mass) in proj.coeffs.chunks(p.harmonics).zip(&proj.ring_mass) {
            assert!(ring.iter().all(|c| c.norm() <= mass * (1.0 + 1e-12)));
        }
    }

    #[test]
    fn errors() {
        let img = GrayImage::filled(41, 41, 0).unwrap();
        assert!(extract_safe(&img, &params()).is_err());
        let img = img.with_geometry((20.0, 20.0), 5.0).unwrap();
        let p = SafeParams {
            inner_radius: 25.0,
            ..params()
        };
        assert!(extract_safe(&img, &p).is_err());
    }
}
