//! Separable filtering on row-major buffers with edge replication.

use std::ops::{AddAssign, Mul};

/// Sampled Gaussian truncated at four standard deviations, unit sum.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (4.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-r..=r).map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// First derivative of the Gaussian, scaled so a unit ramp yields 1.
pub(crate) fn gaussian_derivative_kernel(sigma: f64) -> Vec<f64> {
    let r = (4.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|x| {
            let x = x as f64;
            -x * (-(x * x) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    // Correlating a ramp f(x) = x must give 1.
    let norm: f64 = k.iter().enumerate().map(|(i, v)| v * (i as isize - r) as f64).sum();
    k.iter_mut().for_each(|v| *v /= norm);
    k
}

/// Correlates each row with `kernel` (centred), replicating edge samples.
pub(crate) fn filter_rows<T>(src: &[T], width: usize, height: usize, kernel: &[T::Coef]) -> Vec<T>
where
    T: Sample,
{
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![T::default(); src.len()];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        let dst = &mut out[y * width..(y + 1) * width];
        for (x, d) in dst.iter_mut().enumerate() {
            let mut acc = T::default();
            for (i, &k) in kernel.iter().enumerate() {
                let xi = (x as isize + i as isize - r).clamp(0, width as isize - 1) as usize;
                acc += row[xi].scale(k);
            }
            *d = acc;
        }
    }
    out
}

/// Correlates each column with `kernel` (centred), replicating edge samples.
pub(crate) fn filter_cols<T>(src: &[T], width: usize, height: usize, kernel: &[T::Coef]) -> Vec<T>
where
    T: Sample,
{
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![T::default(); src.len()];
    for y in 0..height {
        let dst = &mut out[y * width..(y + 1) * width];
        for (i, &k) in kernel.iter().enumerate() {
            let yi = (y as isize + i as isize - r).clamp(0, height as isize - 1) as usize;
            let row = &src[yi * width..(yi + 1) * width];
            for (d, &s) in dst.iter_mut().zip(row) {
                *d += s.scale(k);
            }
        }
    }
    out
}

/// Buffer element that can be scaled by a kernel coefficient.
pub(crate) trait Sample: Copy + Default + AddAssign {
    type Coef: Copy;
    fn scale(self, k: Self::Coef) -> Self;
}

impl Sample for f64 {
    type Coef = f64;
    #[inline]
    fn scale(self, k: f64) -> f64 {
        self * k
    }
}

impl Sample for num_complex::Complex64 {
    type Coef = num_complex::Complex64;
    #[inline]
    fn scale(self, k: Self::Coef) -> Self {
        self.mul(k)
    }
}
