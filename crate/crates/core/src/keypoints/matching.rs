use std::f64::consts::PI;

use super::{Keypoint, MatchParams};

const GEOMETRY_BINS: usize = 20;

/// Index and squared distance of the nearest and second-nearest descriptors.
fn two_nearest(q: &[f64], set: &[Keypoint]) -> (usize, f64, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    let mut second = f64::INFINITY;
    for (j, k) in set.iter().enumerate() {
        let d: f64 = q.iter().zip(&k.descriptor).map(|(a, b)| (a - b) * (a - b)).sum();
        // Strict comparison keeps the smaller index on ties.
        if d < best.1 {
            second = best.1;
            best = (j, d);
        } else if d < second {
            second = d;
        }
    }
    (best.0, best.1, second)
}

/// Nearest neighbours of every point of `from` in `to` that pass the ratio test.
fn ratio_matches(from: &[Keypoint], to: &[Keypoint], ratio: f64) -> Vec<Option<usize>> {
    from.iter()
        .map(|k| {
            let (j, d1, d2) = two_nearest(&k.descriptor, to);
            (d1 < ratio * ratio * d2).then_some(j)
        })
        .collect()
}

/// Matched pairs `(index in a, index in b)` surviving the ratio test in both
/// directions and the geometric consistency check.
pub fn match_pairs(a: &[Keypoint], b: &[Keypoint], p: &MatchParams) -> Vec<(usize, usize)> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let ab = ratio_matches(a, b, p.ratio_threshold);
    let ba = ratio_matches(b, a, p.ratio_threshold);
    let pairs: Vec<(usize, usize)> = ab
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.filter(|&j| ba[j] == Some(i)).map(|j| (i, j)))
        .collect();
    if pairs.is_empty() {
        return pairs;
    }

    // Displacements as undirected segments: angle in [0, pi) and length.
    let geometry: Vec<(f64, f64)> = pairs
        .iter()
        .map(|&(i, j)| {
            let (mut dx, mut dy) = (b[j].x - a[i].x, b[j].y - a[i].y);
            // Point into the upper half-plane so swapping the sets changes nothing.
            if dy < 0.0 || (dy == 0.0 && dx < 0.0) {
                (dx, dy) = (-dx, -dy);
            }
            (dy.atan2(dx) % PI, dx.hypot(dy))
        })
        .collect();
    let angles: Vec<f64> = geometry.iter().map(|g| g.0).collect();
    let lengths: Vec<f64> = geometry.iter().map(|g| g.1).collect();
    let (mode_angle, _) = mode(&angles, 0.0, PI);
    let lmin = lengths.iter().cloned().fold(f64::INFINITY, f64::min);
    let lmax = lengths.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mode_length, length_bin) = mode(&lengths, lmin, lmax);

    pairs
        .into_iter()
        .zip(geometry)
        .filter(|&(_, (angle, length))| {
            let d = (angle - mode_angle).abs();
            let angle_ok = d.min(PI - d) <= p.angle_tolerance;
            let length_ok = (length - mode_length).abs() <= p.length_tolerance * mode_length + length_bin / 2.0;
            // Zero-length displacements carry no direction.
            (angle_ok || length == 0.0) && length_ok
        })
        .map(|(pair, _)| pair)
        .collect()
}

/// Centre of the fullest histogram bin over `[lo, hi]` and the bin width.
/// Ties go to the lower bin.
fn mode(values: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    let width = (hi - lo) / GEOMETRY_BINS as f64;
    if width <= 0.0 {
        return (lo, 0.0);
    }
    let mut counts = [0usize; GEOMETRY_BINS];
    for &v in values {
        counts[(((v - lo) / width) as usize).min(GEOMETRY_BINS - 1)] += 1;
    }
    let best = counts.iter().enumerate().fold(0, |best, (i, &c)| if c > counts[best] { i } else { best });
    (lo + (best as f64 + 0.5) * width, width)
}

/// Surviving pairs over the size of the smaller set; 0 when either set is empty.
pub fn match_score(a: &[Keypoint], b: &[Keypoint], p: &MatchParams) -> f64 {
    if a.is_empty() || b.is_empty() {
        log::warn!("key-point set is empty ({} vs {} points); scoring 0", a.len(), b.len());
        return 0.0;
    }
    match_pairs(a, b, p).len() as f64 / a.len().min(b.len()) as f64
}
