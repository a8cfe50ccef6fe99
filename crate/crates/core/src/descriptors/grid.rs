use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GrayImage;

/// Block layout shared by the Gabor, LBP and HOG extractors.
///
/// Block edges fall at `floor(i * extent / count)`, so the grid tiles the
/// image exactly even when the extent is not a multiple of the block size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaborGrid {
    pub rows: usize,
    pub cols: usize,
    /// Nominal block side in pixels.
    pub block: usize,
    /// Expected image size as (height, width).
    pub image_size: (usize, usize),
    /// (row, col) of blocks left out of the descriptor.
    pub excluded_blocks: Vec<(usize, usize)>,
    /// Gabor wavelengths in pixels.
    pub wavelengths: Vec<f64>,
    pub orientations: usize,
}

/// Pixel extent of one active block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockRect {
    pub row: usize,
    pub col: usize,
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl BlockRect {
    /// Integer pixel nearest the block centre.
    pub fn center(&self) -> (usize, usize) {
        ((self.x0 + self.x1 - 1) / 2, (self.y0 + self.y1 - 1) / 2)
    }
}

impl GaborGrid {
    /// 7x8 blocks of 88 px over the 613x701 corner-normalized crop.
    pub fn cross_eyed() -> Self {
        Self::with_center_excluded(7, 8, 88, (613, 701), 2)
    }

    /// 8x8 blocks of 109 px over the 871x871 sclera-normalized crop.
    pub fn vssiris() -> Self {
        Self::with_center_excluded(8, 8, 109, (871, 871), 3)
    }

    /// Excludes a 2x4 patch of blocks starting at `top` over the middle columns.
    fn with_center_excluded(rows: usize, cols: usize, block: usize, image_size: (usize, usize), top: usize) -> Self {
        let left = (cols - 4) / 2;
        let excluded_blocks = (top..top + 2).flat_map(|r| (left..left + 4).map(move |c| (r, c))).collect();
        Self {
            rows,
            cols,
            block,
            image_size,
            excluded_blocks,
            wavelengths: default_wavelengths(block),
            orientations: 6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::invalid("grid must have at least one block"));
        }
        let (h, w) = self.image_size;
        if h < self.rows || w < self.cols {
            return Err(Error::invalid(format!("{h}x{w} image cannot hold {}x{} blocks", self.rows, self.cols)));
        }
        for (i, &(r, c)) in self.excluded_blocks.iter().enumerate() {
            if r >= self.rows || c >= self.cols {
                return Err(Error::invalid(format!("excluded block ({r},{c}) is outside the grid")));
            }
            if self.excluded_blocks[..i].contains(&(r, c)) {
                return Err(Error::invalid(format!("excluded block ({r},{c}) listed twice")));
            }
        }
        if self.active_count() == 0 {
            return Err(Error::invalid("grid has no active blocks"));
        }
        if self.orientations == 0 || self.wavelengths.is_empty() || self.wavelengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::invalid("Gabor bank needs positive wavelengths and orientations"));
        }
        Ok(())
    }

    pub fn active_count(&self) -> usize {
        self.rows * self.cols - self.excluded_blocks.len()
    }

    pub fn channels(&self) -> usize {
        self.wavelengths.len() * self.orientations
    }

    /// Active blocks in row-major order.
    pub fn active_blocks(&self) -> Vec<BlockRect> {
        let (h, w) = self.image_size;
        let mut out = Vec::with_capacity(self.active_count());
        for row in 0..self.rows {
            for col in 0..self.cols {
                if self.excluded_blocks.contains(&(row, col)) {
                    continue;
                }
                out.push(BlockRect {
                    row,
                    col,
                    y0: row * h / self.rows,
                    y1: (row + 1) * h / self.rows,
                    x0: col * w / self.cols,
                    x1: (col + 1) * w / self.cols,
                });
            }
        }
        out
    }

    /// Validates the grid and checks that it tiles `img`.
    pub(crate) fn check(&self, img: &GrayImage) -> Result<()> {
        self.validate()?;
        if (img.height(), img.width()) != self.image_size {
            return Err(Error::invalid(format!(
                "grid expects {}x{} images, got {}x{}",
                self.image_size.0,
                self.image_size.1,
                img.height(),
                img.width()
            )));
        }
        Ok(())
    }
}

/// Five wavelengths log-spaced from `block/2` down to `block/16`.
pub fn default_wavelengths(block: usize) -> Vec<f64> {
    let top = block as f64 / 2.0;
    (0..5).map(|k| top * (1.0f64 / 8.0).powf(k as f64 / 4.0)).collect()
}
