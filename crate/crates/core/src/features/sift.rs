//! Lowe-style 4x4x8 gradient orientation histograms.

use std::f32::consts::TAU;

use crate::error::{Error, Result};
use crate::imaging::{gradients, GrayImage};

use super::Keypoint;

pub const SIFT_DIM: usize = 128;
const SPATIAL: usize = 4;
const ORIENTATIONS: usize = 8;
const CLAMP: f32 = 0.2;

/// Precomputed gradient magnitude and orientation, shared by all keypoints
/// of one image.
pub struct SiftExtractor {
    width: usize,
    height: usize,
    magnitude: Vec<f32>,
    orientation: Vec<f32>,
}

impl SiftExtractor {
    pub fn new(img: &GrayImage) -> Result<Self> {
        let g = gradients(img)?;
        let magnitude = g.gx.iter().zip(&g.gy).map(|(x, y)| x.hypot(*y)).collect();
        let orientation = g.gx.iter().zip(&g.gy).map(|(x, y)| y.atan2(*x)).collect();
        Ok(Self {
            width: g.width,
            height: g.height,
            magnitude,
            orientation,
        })
    }

    /// The patch has side `4 * scale`, so each spatial bin is `scale` wide.
    pub fn describe(&self, kp: &Keypoint) -> Result<[f32; SIFT_DIM]> {
        let s = kp.scale;
        if !(s > 0.0) || !kp.x.is_finite() || !kp.y.is_finite() {
            return Err(Error::invalid(format!("invalid keypoint {kp:?}")));
        }
        let half = 2.0 * s;
        let (w, h) = (self.width as f32, self.height as f32);
        if kp.x + half < 0.0 || kp.y + half < 0.0 || kp.x - half > w - 1.0 || kp.y - half > h - 1.0 {
            return Err(Error::invalid(format!(
                "keypoint patch at ({}, {}) lies outside the {}x{} image",
                kp.x, kp.y, self.width, self.height
            )));
        }

        let sigma = half;
        let inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
        let (sin, cos) = kp.orientation.sin_cos();
        // Soft binning reaches half a bin beyond the patch.
        let radius = (2.5 * s * std::f32::consts::SQRT_2).ceil();
        let x0 = (kp.x - radius).floor().max(0.0) as usize;
        let x1 = ((kp.x + radius).ceil().min(w - 1.0)).max(0.0) as usize;
        let y0 = (kp.y - radius).floor().max(0.0) as usize;
        let y1 = ((kp.y + radius).ceil().min(h - 1.0)).max(0.0) as usize;

        let mut hist = [0.0f32; SIFT_DIM];
        for py in y0..=y1 {
            for px in x0..=x1 {
                let dx = px as f32 - kp.x;
                let dy = py as f32 - kp.y;
                let u = (cos * dx + sin * dy) / s;
                let v = (-sin * dx + cos * dy) / s;
                let cb = u + 1.5;
                let rb = v + 1.5;
                if cb <= -1.0 || cb >= 4.0 || rb <= -1.0 || rb >= 4.0 {
                    continue;
                }
                let i = py * self.width + px;
                let m = self.magnitude[i];
                if m == 0.0 {
                    continue;
                }
                let mut theta = self.orientation[i] - kp.orientation;
                theta = theta.rem_euclid(TAU);
                let ob = theta * ORIENTATIONS as f32 / TAU;
                let weight = m * (-(dx * dx + dy * dy) * inv_two_sigma_sq).exp();
                accumulate(&mut hist, rb, cb, ob, weight);
            }
        }
        Ok(normalize(hist))
    }
}

fn accumulate(hist: &mut [f32; SIFT_DIM], rb: f32, cb: f32, ob: f32, weight: f32) {
    let (r0, c0, o0) = (rb.floor(), cb.floor(), ob.floor());
    let (fr, fc, fo) = (rb - r0, cb - c0, ob - o0);
    let (r0, c0, o0) = (r0 as i32, c0 as i32, o0 as i32);
    for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
        let r = r0 + dr;
        if !(0..SPATIAL as i32).contains(&r) {
            continue;
        }
        for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
            let c = c0 + dc;
            if !(0..SPATIAL as i32).contains(&c) {
                continue;
            }
            for (dor, wo) in [(0, 1.0 - fo), (1, fo)] {
                let o = (o0 + dor).rem_euclid(ORIENTATIONS as i32) as usize;
                let idx = (r as usize * SPATIAL + c as usize) * ORIENTATIONS + o;
                hist[idx] += weight * wr * wc * wo;
            }
        }
    }
}

/// L2 -> clamp at 0.2 -> L2; the zero vector stays zero.
fn normalize(mut v: [f32; SIFT_DIM]) -> [f32; SIFT_DIM] {
    let norm = |v: &[f32]| v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt() as f32;
    let n = norm(&v);
    if !(n > f32::MIN_POSITIVE) {
        return [0.0; SIFT_DIM];
    }
    for x in v.iter_mut() {
        *x = (*x / n).min(CLAMP);
    }
    let n = norm(&v);
    for x in v.iter_mut() {
        *x /= n;
    }
    v
}

/// One-off descriptor; prefer [`SiftExtractor`] for many keypoints.
pub fn sift_descriptor(img: &GrayImage, kp: &Keypoint) -> Result<[f32; SIFT_DIM]> {
    SiftExtractor::new(img)?.describe(kp)
}
