//! Dalal-Triggs HOG on a 256x256 cell image.

use std::f32::consts::PI;

use crate::error::{Error, Result};
use crate::imaging::{gradients, GrayImage};

pub const HOG_SIDE: usize = 256;
const CELL: usize = 8;
const BINS: usize = 9;
const CELLS: usize = HOG_SIDE / CELL;
const BLOCKS: usize = CELLS - 1;
const BLOCK_LEN: usize = 4 * BINS;
pub const HOG_DIM: usize = BLOCKS * BLOCKS * BLOCK_LEN;
const CLIP: f32 = 0.2;
const EPS: f32 = 1e-5;

/// Unsigned orientation in `[0, pi)`, hard-assigned to one of 9 bins.
pub(crate) fn orientation_bin(gx: f32, gy: f32) -> usize {
    let (x, y) = if gy < 0.0 || (gy == 0.0 && gx < 0.0) { (-gx, -gy) } else { (gx, gy) };
    let theta = y.atan2(x);
    ((theta * BINS as f32 / PI) as usize).min(BINS - 1)
}

/// Cell histograms, 2x2-cell blocks at a stride of one cell, L2-hys per block.
///
/// Blocks are laid out row-major; inside a block the four cells are
/// row-major too, each contributing 9 bins.
pub fn hog_descriptor(img: &GrayImage) -> Result<Vec<f32>> {
    if img.width() != HOG_SIDE || img.height() != HOG_SIDE {
        return Err(Error::invalid(format!(
            "HOG expects a {HOG_SIDE}x{HOG_SIDE} image, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let g = gradients(img)?;
    let mut cells = vec![0.0f32; CELLS * CELLS * BINS];
    for y in 0..HOG_SIDE {
        for x in 0..HOG_SIDE {
            let (gx, gy) = g.at(x, y);
            let m = gx.hypot(gy);
            if m == 0.0 {
                continue;
            }
            let c = (y / CELL) * CELLS + x / CELL;
            cells[c * BINS + orientation_bin(gx, gy)] += m;
        }
    }

    let mut out = Vec::with_capacity(HOG_DIM);
    let mut block = [0.0f32; BLOCK_LEN];
    for by in 0..BLOCKS {
        for bx in 0..BLOCKS {
            for (k, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                let c = (by + dy) * CELLS + bx + dx;
                block[k * BINS..(k + 1) * BINS].copy_from_slice(&cells[c * BINS..(c + 1) * BINS]);
            }
            l2_hys(&mut block);
            out.extend_from_slice(&block);
        }
    }
    Ok(out)
}

fn l2_hys(v: &mut [f32]) {
    let scale = |v: &[f32]| 1.0 / (v.iter().map(|x| x * x).sum::<f32>() + EPS * EPS).sqrt();
    let s = scale(v);
    for x in v.iter_mut() {
        *x = (*x * s).min(CLIP);
    }
    let s = scale(v);
    for x in v.iter_mut() {
        *x *= s;
    }
}
