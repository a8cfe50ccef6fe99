use crate::error::{Error, Result};

/// Pixel-space point, `x` to the right and `y` downwards.
pub type Point = (f64, f64);

/// 8-bit single-channel raster with optional eye geometry.
///
/// Pixel `(x, y)` sits at continuous coordinate `(x, y)`; the anchor is the
/// eye centre and `scale_ref` the corner distance or sclera radius the
/// image was normalized to.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
    anchor: Option<Point>,
    scale_ref: Option<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "pixel buffer holds {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            anchor: None,
            scale_ref: None,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Attaches eye geometry, validating the anchor lies inside the frame.
    pub fn with_geometry(mut self, anchor: Point, scale_ref: f64) -> Result<Self> {
        let (ax, ay) = anchor;
        if !(ax >= 0.0 && ay >= 0.0 && ax <= (self.width - 1) as f64 && ay <= (self.height - 1) as f64) {
            return Err(Error::invalid(format!(
                "anchor ({ax}, {ay}) outside {}x{} image",
                self.width, self.height
            )));
        }
        if !(scale_ref > 0.0 && scale_ref.is_finite()) {
            return Err(Error::invalid(format!("scale reference must be positive, got {scale_ref}")));
        }
        self.anchor = Some(anchor);
        self.scale_ref = Some(scale_ref);
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn anchor(&self) -> Option<Point> {
        self.anchor
    }

    pub fn scale_ref(&self) -> Option<f64> {
        self.scale_ref
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Pixel lookup with edge replication for out-of-frame coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    /// Intensities as `f64` with the image mean removed.
    ///
    /// Constant images become exactly zero, which keeps every band-pass
    /// response of a flat input exactly zero as well.
    pub fn centered_f64(&self) -> Vec<f64> {
        let mean = self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64;
        let first = self.data[0];
        if self.data.iter().all(|&v| v == first) {
            return vec![0.0; self.data.len()];
        }
        self.data.iter().map(|&v| v as f64 - mean).collect()
    }
}
