use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::encoding::{EncoderParams, KMeansParams};
use crate::error::{Error, Result};
use crate::features::{check_pairing, DenseGridSpec, DescriptorKind, Sampling};
use crate::svm::{Gamma, GridSearchSpec, KernelKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Seeds {
    pub split: u64,
    pub codebook: u64,
    pub cv: u64,
}

impl Seeds {
    /// Seeds of repeat `r`: each seed shifted by `r`.
    pub fn offset(self, r: u64) -> Seeds {
        Seeds {
            split: self.split.wrapping_add(r),
            codebook: self.codebook.wrapping_add(r),
            cv: self.cv.wrapping_add(r),
        }
    }
}

/// Everything that determines a training run. Two configs with the same
/// [`digest`](PipelineConfig::digest) produce identical artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub sampling: Sampling,
    pub descriptor: DescriptorKind,
    pub encoder: EncoderParams,
    pub kernel: KernelKind,
    /// `None` selects the kernel's default C grid.
    pub grid_c: Option<Vec<f64>>,
    /// `None` selects the default gamma grid (RBF only).
    pub grid_gamma: Option<Vec<Gamma>>,
    pub folds: usize,
    pub use_sample_weights: bool,
    /// Score cross-validation folds with the per-sample label-confidence
    /// weights (only when sample weighting is on). Test metrics are always
    /// unweighted.
    pub weighted_selection: bool,
    pub test_fraction: f64,
    /// Dense grid used for images on which the corner detector finds
    /// nothing.
    pub corner_fallback_grid: usize,
    pub seeds: Seeds,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sampling: Sampling::Dense(DenseGridSpec::new(60)),
            descriptor: DescriptorKind::Sift,
            encoder: EncoderParams::default(),
            kernel: KernelKind::Linear,
            grid_c: None,
            grid_gamma: None,
            folds: 5,
            use_sample_weights: true,
            weighted_selection: true,
            test_fraction: 0.25,
            corner_fallback_grid: 15,
            seeds: Seeds::default(),
        }
    }
}

/// Keys in canonical order.
pub const CONFIG_KEYS: [&str; 20] = [
    "sampling",
    "descriptor",
    "K",
    "m",
    "rho",
    "kmeans_batch",
    "kmeans_iterations",
    "codebook_sample",
    "whitening_epsilon",
    "svm",
    "grid_c",
    "grid_gamma",
    "folds",
    "use_sample_weights",
    "weighted_selection",
    "test_fraction",
    "corner_fallback_grid",
    "seed_split",
    "seed_codebook",
    "seed_cv",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("config key `{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::invalid(format!("config key `{key}`: expected true or false, got `{value}`"))),
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim().trim_matches('"');
        match key {
            "sampling" => self.sampling = value.parse()?,
            "descriptor" => self.descriptor = value.parse()?,
            "K" | "k" => self.encoder.kmeans.k = parse(key, value)?,
            "m" => self.encoder.m = parse(key, value)?,
            "rho" => self.encoder.rho = parse(key, value)?,
            "kmeans_batch" => self.encoder.kmeans.batch_size = parse(key, value)?,
            "kmeans_iterations" => self.encoder.kmeans.iterations = parse(key, value)?,
            "codebook_sample" => self.encoder.codebook_sample = parse(key, value)?,
            "whitening_epsilon" => self.encoder.whitening_epsilon = parse(key, value)?,
            "svm" | "kernel" => self.kernel = value.parse()?,
            "grid_c" => {
                self.grid_c = if value == "default" {
                    None
                } else {
                    Some(value.split(',').map(|v| parse(key, v.trim())).collect::<Result<_>>()?)
                }
            }
            "grid_gamma" => {
                self.grid_gamma = if value == "default" {
                    None
                } else {
                    Some(value.split(',').map(|v| v.trim().parse()).collect::<Result<_>>()?)
                }
            }
            "folds" => self.folds = parse(key, value)?,
            "use_sample_weights" => self.use_sample_weights = parse_bool(key, value)?,
            "weighted_selection" => self.weighted_selection = parse_bool(key, value)?,
            "test_fraction" => self.test_fraction = parse(key, value)?,
            "corner_fallback_grid" => self.corner_fallback_grid = parse(key, value)?,
            "seed_split" => self.seeds.split = parse(key, value)?,
            "seed_codebook" => self.seeds.codebook = parse(key, value)?,
            "seed_cv" => self.seeds.cv = parse(key, value)?,
            _ => return Err(Error::invalid(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<String> {
        let e = &self.encoder;
        Ok(match key {
            "sampling" => self.sampling.to_string(),
            "descriptor" => self.descriptor.to_string(),
            "K" => e.kmeans.k.to_string(),
            "m" => e.m.to_string(),
            "rho" => e.rho.to_string(),
            "kmeans_batch" => e.kmeans.batch_size.to_string(),
            "kmeans_iterations" => e.kmeans.iterations.to_string(),
            "codebook_sample" => e.codebook_sample.to_string(),
            "whitening_epsilon" => e.whitening_epsilon.to_string(),
            "svm" => self.kernel.to_string(),
            "grid_c" => self.grid_c.as_deref().map_or("default".into(), join),
            "grid_gamma" => self.grid_gamma.as_deref().map_or("default".into(), join),
            "folds" => self.folds.to_string(),
            "use_sample_weights" => self.use_sample_weights.to_string(),
            "weighted_selection" => self.weighted_selection.to_string(),
            "test_fraction" => self.test_fraction.to_string(),
            "corner_fallback_grid" => self.corner_fallback_grid.to_string(),
            "seed_split" => self.seeds.split.to_string(),
            "seed_codebook" => self.seeds.codebook.to_string(),
            "seed_cv" => self.seeds.cv.to_string(),
            _ => return Err(Error::invalid(format!("unknown config key `{key}`"))),
        })
    }

    /// `key = value` lines for every field, in canonical order.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("canonical keys are known"));
        }
        out
    }

    /// Hex SHA-256 of [`canonical_text`](Self::canonical_text).
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.canonical_text().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Reads `key = value` lines on top of the defaults. Blank lines and
    /// `#` comments are skipped.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("config line `{line}` is not `key = value`")))?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }

    pub fn grid_spec(&self) -> GridSearchSpec {
        let mut spec = GridSearchSpec::for_kernel(self.kernel, self.seeds.cv);
        if let Some(c) = &self.grid_c {
            spec.c = c.clone();
        }
        if let Some(g) = &self.grid_gamma {
            spec.gamma = g.clone();
        }
        spec.folds = self.folds;
        spec
    }

    pub fn kmeans(&self) -> KMeansParams {
        self.encoder.kmeans
    }

    /// Checks everything that can be checked without data.
    pub fn validate(&self) -> Result<()> {
        check_pairing(self.sampling, self.descriptor)?;
        let e = &self.encoder;
        if e.m == 0 || e.kmeans.k == 0 {
            return Err(Error::invalid("K and m must be positive"));
        }
        if e.kmeans.batch_size == 0 || e.kmeans.iterations == 0 {
            return Err(Error::invalid("k-means batch size and iterations must be positive"));
        }
        if e.codebook_sample < e.kmeans.k {
            return Err(Error::invalid("codebook_sample must be at least K"));
        }
        if !(e.rho > 0.0 && e.rho <= 1.0) {
            return Err(Error::invalid(format!("rho {} outside (0, 1]", e.rho)));
        }
        if !(e.whitening_epsilon >= 0.0 && e.whitening_epsilon < 1.0) {
            return Err(Error::invalid("whitening_epsilon must lie in [0, 1)"));
        }
        if self.folds < 2 {
            return Err(Error::invalid("cross-validation needs at least 2 folds"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::invalid(format!("test_fraction {} outside (0, 1)", self.test_fraction)));
        }
        if self.corner_fallback_grid == 0 {
            return Err(Error::invalid("corner_fallback_grid must be positive"));
        }
        if let Sampling::Dense(spec) = self.sampling {
            if spec.cells_per_side == 0 {
                return Err(Error::invalid("dense grid needs at least one cell per side"));
            }
        }
        if let Sampling::Corners(spec) = self.sampling {
            if spec.threshold == 0 {
                return Err(Error::invalid("corner threshold must lie in [1, 255]"));
            }
        }
        // Reject malformed grids now rather than after feature extraction.
        self.grid_spec().candidates(1)?;
        Ok(())
    }
}
