use crate::error::{Error, Result};

use super::Keypoint;

/// `n x n` grid of keypoints at the centers of a uniform subdivision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseGridSpec {
    pub cells_per_side: usize,
    /// Defaults to half the grid spacing, i.e. a patch side of twice the
    /// spacing so neighboring patches overlap.
    pub patch_scale: Option<f32>,
}

impl DenseGridSpec {
    pub fn new(cells_per_side: usize) -> Self {
        Self {
            cells_per_side,
            patch_scale: None,
        }
    }

    pub fn resolved_scale(&self, width: usize, height: usize) -> f32 {
        self.patch_scale.unwrap_or_else(|| {
            let n = self.cells_per_side as f32;
            let spacing = 0.5 * (width as f32 / n + height as f32 / n);
            spacing / 2.0
        })
    }
}

pub fn dense_grid(spec: &DenseGridSpec, width: usize, height: usize) -> Result<Vec<Keypoint>> {
    let n = spec.cells_per_side;
    if n == 0 {
        return Err(Error::invalid("dense grid needs at least one cell per side"));
    }
    if width < n || height < n {
        return Err(Error::invalid(format!(
            "a {n}x{n} grid does not fit a {width}x{height} image"
        )));
    }
    let scale = spec.resolved_scale(width, height);
    if !(scale > 0.0) {
        return Err(Error::invalid("patch scale must be positive"));
    }
    let (sx, sy) = (width as f32 / n as f32, height as f32 / n as f32);
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            out.push(Keypoint {
                x: (i as f32 + 0.5) * sx,
                y: (j as f32 + 0.5) * sy,
                scale,
                orientation: 0.0,
            });
        }
    }
    Ok(out)
}
