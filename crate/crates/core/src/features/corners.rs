//! FAST-9 segment-test corners with score-based non-maximum suppression.

use crate::error::{Error, Result};
use crate::imaging::GrayImage;

use super::Keypoint;

/// Patch scale assigned to every detected corner (SIFT window of 12 px).
pub const CORNER_PATCH_SCALE: f32 = 3.0;

const ARC: usize = 9;

/// Bresenham circle of radius 3, clockwise from the top.
const CIRCLE: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerSpec {
    /// Intensity difference on the 8-bit scale.
    pub threshold: u8,
    pub patch_scale: f32,
}

impl CornerSpec {
    pub fn new(threshold: u8) -> Self {
        Self {
            threshold,
            patch_scale: CORNER_PATCH_SCALE,
        }
    }
}

impl Default for CornerSpec {
    fn default() -> Self {
        Self::new(5)
    }
}

pub(crate) fn to_levels(img: &GrayImage) -> Vec<i16> {
    img.data().iter().map(|&v| (v * 255.0).round() as i16).collect()
}

/// Largest threshold `t` for which the pixel still passes the segment test
/// (`score > t`), or 0 when no arc of 9 exists at any positive threshold.
fn pixel_score(levels: &[i16], w: usize, x: usize, y: usize) -> i16 {
    let center = levels[y * w + x];
    let mut d = [0i16; 16];
    for (k, &(dx, dy)) in CIRCLE.iter().enumerate() {
        let px = (x as i32 + dx) as usize;
        let py = (y as i32 + dy) as usize;
        d[k] = levels[py * w + px] - center;
    }
    let mut best = 0i16;
    for start in 0..16 {
        let mut brighter = i16::MAX;
        let mut darker = i16::MAX;
        for k in 0..ARC {
            let v = d[(start + k) % 16];
            brighter = brighter.min(v);
            darker = darker.min(-v);
        }
        best = best.max(brighter).max(darker);
    }
    // A pixel passes at threshold t iff best > t, i.e. the score is best - 1.
    (best - 1).max(0)
}

/// Segment-test scores for every pixel; the 3-pixel border is always 0.
pub(crate) fn score_map(img: &GrayImage) -> Vec<i16> {
    let (w, h) = (img.width(), img.height());
    let levels = to_levels(img);
    let mut scores = vec![0i16; w * h];
    if w < 7 || h < 7 {
        return scores;
    }
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            scores[y * w + x] = pixel_score(&levels, w, x, y);
        }
    }
    scores
}

/// Corners whose score reaches `threshold`, with 3x3 non-maximum suppression.
///
/// A corner is suppressed by a neighboring corner with a strictly higher
/// score, or an equal score and a smaller raster index. Raising the
/// threshold only removes lower-scored competitors, so the result at a
/// higher threshold is always a subset of the result at a lower one.
pub fn detect_corners(img: &GrayImage, spec: &CornerSpec) -> Result<Vec<Keypoint>> {
    if spec.threshold == 0 {
        return Err(Error::invalid("corner threshold must lie in [1, 255]"));
    }
    if !(spec.patch_scale > 0.0) {
        return Err(Error::invalid("corner patch scale must be positive"));
    }
    let (w, h) = (img.width(), img.height());
    let t = spec.threshold as i16;
    let scores = score_map(img);
    let mut out = Vec::new();
    for y in 3..h.saturating_sub(3) {
        for x in 3..w.saturating_sub(3) {
            let i = y * w + x;
            let s = scores[i];
            if s < t {
                continue;
            }
            let mut keep = true;
            'nb: for ny in y - 1..=y + 1 {
                for nx in x - 1..=x + 1 {
                    let j = ny * w + nx;
                    if j == i {
                        continue;
                    }
                    let o = scores[j];
                    if o >= t && (o > s || (o == s && j < i)) {
                        keep = false;
                        break 'nb;
                    }
                }
            }
            if keep {
                out.push(Keypoint {
                    x: x as f32,
                    y: y as f32,
                    scale: spec.patch_scale,
                    orientation: 0.0,
                });
            }
        }
    }
    Ok(out)
}
