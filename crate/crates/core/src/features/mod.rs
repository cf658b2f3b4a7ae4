//! Keypoint sampling and local descriptors.
//!
//! Two sampling strategies feed the SIFT descriptor: a dense grid with
//! equally sized, equally oriented keypoints, and a FAST-9 segment-test
//! corner detector. HOG describes the whole (resized) cell at once.

mod corners;
mod dense;
mod dump;
mod hog;
mod sift;

use std::fmt;
use std::str::FromStr;

pub use corners::{detect_corners, CornerSpec, CORNER_PATCH_SCALE};
pub use dense::{dense_grid, DenseGridSpec};
pub use dump::{read_descriptor_dump, write_descriptor_dump};
pub use hog::{hog_descriptor, HOG_DIM, HOG_SIDE};
pub use sift::{sift_descriptor, SiftExtractor, SIFT_DIM};

use crate::error::{Error, Result};
use crate::imaging::{resize, GrayImage};

/// Sampling location with patch radius and orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    /// Patch scale; the SIFT window spans `4 * scale` pixels per side.
    pub scale: f32,
    pub orientation: f32,
}

/// Row-major `n x d` matrix of local descriptors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Descriptors {
    dim: usize,
    data: Vec<f32>,
}

impl Descriptors {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("descriptor dimension must be positive"));
        }
        if data.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "{} values do not form rows of length {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub fn from_rows<R: AsRef<[f32]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::invalid(format!("row of length {} in a {dim}-d set", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn push_row(&mut self, row: &[f32]) {
        assert_eq!(row.len(), self.dim, "row length mismatch");
        self.data.extend_from_slice(row);
    }

    pub fn extend(&mut self, other: &Descriptors) {
        assert_eq!(other.dim, self.dim, "dimension mismatch");
        self.data.extend_from_slice(&other.data);
    }

    pub fn select(&self, rows: &[usize]) -> Descriptors {
        let mut out = Descriptors::empty(self.dim);
        for &r in rows {
            out.push_row(self.row(r));
        }
        out
    }
}

/// Descriptors together with the keypoints they were computed at.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    pub descriptors: Descriptors,
    /// Empty for whole-image descriptors (HOG).
    pub keypoints: Vec<Keypoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    Dense(DenseGridSpec),
    Corners(CornerSpec),
    /// No keypoints; one descriptor for the whole cell.
    WholeImage,
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sampling::Dense(spec) => write!(f, "dense:{}", spec.cells_per_side),
            Sampling::Corners(spec) => write!(f, "corners:{}", spec.threshold),
            Sampling::WholeImage => f.write_str("whole"),
        }
    }
}

impl FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("sampling `{s}`: expected dense:<n>, corners:<threshold> or whole"));
        match s.split_once(':') {
            Some(("dense", n)) => Ok(Sampling::Dense(DenseGridSpec::new(n.parse().map_err(|_| bad())?))),
            Some(("corners", t)) => Ok(Sampling::Corners(CornerSpec::new(t.parse().map_err(|_| bad())?))),
            None if s == "whole" => Ok(Sampling::WholeImage),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescriptorKind {
    Sift,
    Hog,
}

impl DescriptorKind {
    pub fn dim(self) -> usize {
        match self {
            DescriptorKind::Sift => SIFT_DIM,
            DescriptorKind::Hog => HOG_DIM,
        }
    }
}

impl fmt::Display for DescriptorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DescriptorKind::Sift => "sift",
            DescriptorKind::Hog => "hog",
        })
    }
}

impl FromStr for DescriptorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sift" => Ok(DescriptorKind::Sift),
            "hog" => Ok(DescriptorKind::Hog),
            _ => Err(Error::invalid(format!("descriptor `{s}`: expected sift or hog"))),
        }
    }
}

/// HOG needs the whole-image path; SIFT needs keypoints.
pub fn check_pairing(sampling: Sampling, kind: DescriptorKind) -> Result<()> {
    match (sampling, kind) {
        (Sampling::Dense(_) | Sampling::Corners(_), DescriptorKind::Sift) => Ok(()),
        (Sampling::WholeImage, DescriptorKind::Hog) => Ok(()),
        (s, k) => Err(Error::invalid(format!(
            "descriptor {k} cannot be combined with sampling {s}"
        ))),
    }
}

/// Samples keypoints and describes them.
///
/// Zero-norm SIFT rows are kept so dense output shape does not depend on
/// image content. Corner detection may legitimately return no rows.
pub fn extract(img: &GrayImage, sampling: Sampling, kind: DescriptorKind) -> Result<DescriptorSet> {
    check_pairing(sampling, kind)?;
    match kind {
        DescriptorKind::Hog => {
            let resized = resize(img, HOG_SIDE, HOG_SIDE)?;
            let v = hog_descriptor(&resized)?;
            Ok(DescriptorSet {
                descriptors: Descriptors::new(HOG_DIM, v)?,
                keypoints: Vec::new(),
            })
        }
        DescriptorKind::Sift => {
            let keypoints = match sampling {
                Sampling::Dense(spec) => dense_grid(&spec, img.width(), img.height())?,
                Sampling::Corners(spec) => detect_corners(img, &spec)?,
                Sampling::WholeImage => unreachable!("rejected by check_pairing"),
            };
            describe_sift(img, keypoints)
        }
    }
}

pub fn describe_sift(img: &GrayImage, keypoints: Vec<Keypoint>) -> Result<DescriptorSet> {
    let extractor = SiftExtractor::new(img)?;
    let mut data = Vec::with_capacity(keypoints.len() * SIFT_DIM);
    for kp in &keypoints {
        data.extend_from_slice(&extractor.describe(kp)?);
    }
    Ok(DescriptorSet {
        descriptors: Descriptors::new(SIFT_DIM, data)?,
        keypoints,
    })
}
