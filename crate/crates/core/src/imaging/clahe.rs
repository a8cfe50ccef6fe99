//! Contrast-limited adaptive histogram equalization.

use crate::error::{Error, Result};
use crate::model::GrayImage;

pub const DEFAULT_TILES: (usize, usize) = (8, 8);
pub const DEFAULT_CLIP_LIMIT: f64 = 0.01;

/// Equalizes `img` tile by tile.
///
/// Each tile histogram is clipped at `clip_limit * tile_pixels` and the
/// clipped mass is spread evenly over the intensity range the tile occupies,
/// so a flat tile maps to one fixed level. Tile mappings are
/// `255 * cdf(v)` and are blended bilinearly between tile centres; pixels
/// outside the outermost centres use the nearest tiles.
pub fn clahe(img: &GrayImage, tiles: (usize, usize), clip_limit: f64) -> Result<GrayImage> {
    let (rows, cols) = tiles;
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("tile grid must be at least 1x1"));
    }
    if !(clip_limit > 0.0 && clip_limit <= 1.0) {
        return Err(Error::invalid(format!("clip limit must be in (0, 1], got {clip_limit}")));
    }
    let (w, h) = (img.width(), img.height());
    if w < cols || h < rows {
        return Err(Error::invalid(format!("{w}x{h} image is smaller than the {rows}x{cols} tile grid")));
    }

    let row_edges: Vec<usize> = (0..=rows).map(|i| i * h / rows).collect();
    let col_edges: Vec<usize> = (0..=cols).map(|j| j * w / cols).collect();

    let mut luts = vec![[0.0f64; 256]; rows * cols];
    for ty in 0..rows {
        for tx in 0..cols {
            let mut hist = [0.0f64; 256];
            for y in row_edges[ty]..row_edges[ty + 1] {
                for x in col_edges[tx]..col_edges[tx + 1] {
                    hist[img.get(x, y) as usize] += 1.0;
                }
            }
            let n = ((row_edges[ty + 1] - row_edges[ty]) * (col_edges[tx + 1] - col_edges[tx])) as f64;
            let limit = clip_limit * n;
            let mut excess = 0.0;
            for b in hist.iter_mut() {
                if *b > limit {
                    excess += *b - limit;
                    *b = limit;
                }
            }
            let lo = hist.iter().position(|&b| b > 0.0).unwrap_or(0);
            let hi = hist.iter().rposition(|&b| b > 0.0).unwrap_or(255);
            let share = excess / (hi - lo + 1) as f64;
            let lut = &mut luts[ty * cols + tx];
            let mut cdf = 0.0;
            for (v, b) in hist.iter().enumerate() {
                cdf += b;
                if (lo..=hi).contains(&v) {
                    cdf += share;
                }
                lut[v] = 255.0 * cdf / n;
            }
        }
    }

    let centers = |edges: &[usize]| -> Vec<f64> { edges.windows(2).map(|e| (e[0] + e[1] - 1) as f64 / 2.0).collect() };
    let (cy, cx) = (centers(&row_edges), centers(&col_edges));
    // Neighbouring tile indices and blend weight for a coordinate.
    let locate = |c: &[f64], p: f64| -> (usize, usize, f64) {
        if p <= c[0] {
            return (0, 0, 0.0);
        }
        let last = c.len() - 1;
        if p >= c[last] {
            return (last, last, 0.0);
        }
        let i = c.partition_point(|&v| v <= p) - 1;
        (i, i + 1, (p - c[i]) / (c[i + 1] - c[i]))
    };

    let x_loc: Vec<_> = (0..w).map(|x| locate(&cx, x as f64)).collect();
    GrayImage::from_fn(w, h, |x, y| {
        let (y0, y1, fy) = locate(&cy, y as f64);
        let (x0, x1, fx) = x_loc[x];
        let v = img.get(x, y) as usize;
        let top = (1.0 - fx) * luts[y0 * cols + x0][v] + fx * luts[y0 * cols + x1][v];
        let bottom = (1.0 - fx) * luts[y1 * cols + x0][v] + fx * luts[y1 * cols + x1][v];
        ((1.0 - fy) * top + fy * bottom).round().clamp(0.0, 255.0) as u8
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entropy(img: &GrayImage) -> f64 {
        let mut hist = [0usize; 256];
        img.data().iter().for_each(|&v| hist[v as usize] += 1);
        let n = img.data().len() as f64;
        hist.iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.log2()
            })
            .sum()
    }

    #[test]
    fn constant_stays_constant_and_is_idempotent() {
        let img = GrayImage::filled(40, 30, 77).unwrap();
        let once = clahe(&img, DEFAULT_TILES, DEFAULT_CLIP_LIMIT).unwrap();
        let v = once.get(0, 0);
        assert!(once.data().iter().all(|&p| p == v));
        let twice = clahe(&once, DEFAULT_TILES, DEFAULT_CLIP_LIMIT).unwrap();
        assert_eq!(twice, once);
    }

    #[test]
    fn single_tile_without_clipping_is_global_equalization() {
        let img = GrayImage::from_fn(37, 23, |x, y| ((x * x + 3 * y * y + x * y) % 200) as u8).unwrap();
        let out = clahe(&img, (1, 1), 1.0).unwrap();
        // Direct CDF oracle.
        let n = img.data().len() as f64;
        for (&src, &dst) in img.data().iter().zip(out.data()) {
            let below = img.data().iter().filter(|&&v| v <= src).count() as f64;
            assert_eq!(dst, (255.0 * below / n).round() as u8);
        }
    }

    #[test]
    fn gradient_gets_flatter() {
        // Low-contrast diagonal ramp: 16 levels with a triangular histogram.
        let img = GrayImage::from_fn(64, 64, |x, y| (96 + (x + y) / 8) as u8).unwrap();
        let out = clahe(&img, (8, 8), DEFAULT_CLIP_LIMIT).unwrap();
        assert!(entropy(&out) > entropy(&img), "{} vs {}", entropy(&out), entropy(&img));
    }

    #[test]
    fn bad_parameters() {
        let img = GrayImage::filled(4, 4, 0).unwrap();
        assert!(clahe(&img, (8, 8), 0.01).is_err());
        assert!(clahe(&img, (0, 1), 0.01).is_err());
        assert!(clahe(&img, (1, 1), 0.0).is_err());
        assert!(clahe(&img, (1, 1), 1.5).is_err());
    }
}
