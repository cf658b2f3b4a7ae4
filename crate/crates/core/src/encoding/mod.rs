//! Fixed-length global descriptors from variable-size descriptor sets.
//!
//! Per codebook: VLAD residual sums, power normalization, L2
//! normalization. The codebook encodings are concatenated, PCA-whitened
//! jointly and L2-normalized once more.

mod block;
mod kmeans;
mod vlad;
mod whitening;

pub use block::BlockVector;
pub use kmeans::{fit_codebook, Codebook, KMeansParams};
pub use vlad::{l2_norm, l2_normalize, power_normalize, vlad_aggregate};
pub use whitening::{fit_whitener, Whitener, DEFAULT_RELATIVE_EPSILON};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::container::Container;
use crate::error::{Error, Result};
use crate::features::Descriptors;

const KIND: &str = "vlad-encoder";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderParams {
    /// Number of codebooks trained on disjoint descriptor shards.
    pub m: usize,
    pub kmeans: KMeansParams,
    pub rho: f64,
    /// Descriptors drawn per codebook for clustering.
    pub codebook_sample: usize,
    pub whitening_epsilon: f64,
}

impl Default for EncoderParams {
    fn default() -> Self {
        Self {
            m: 5,
            kmeans: KMeansParams::default(),
            rho: 0.5,
            codebook_sample: 50_000,
            whitening_epsilon: DEFAULT_RELATIVE_EPSILON,
        }
    }
}

/// Whitened, L2-normalized encoding of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalDescriptor {
    pub values: Vec<f64>,
    /// The whitened vector was zero and could not be normalized.
    pub degenerate: bool,
}

/// Concatenated per-codebook encodings before whitening.
#[derive(Debug, Clone, PartialEq)]
pub struct Prewhitened {
    pub vector: BlockVector,
    /// Codebooks whose VLAD vector was zero (left as zero).
    pub zero_codebooks: usize,
}

/// Trains codebook `j` on `shards[j]` with seed `seed + j`.
pub fn fit_codebooks(shards: &[Descriptors], params: KMeansParams, seed: u64) -> Result<Vec<Codebook>> {
    shards
        .par_iter()
        .enumerate()
        .map(|(j, shard)| fit_codebook(shard, params, seed.wrapping_add(j as u64)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct VladEncoder {
    codebooks: Vec<Codebook>,
    rho: f64,
    whitener: Option<Whitener>,
}

impl VladEncoder {
    pub fn new(codebooks: Vec<Codebook>, rho: f64) -> Result<Self> {
        let first = codebooks.first().ok_or_else(|| Error::invalid("an encoder needs at least one codebook"))?;
        if codebooks.iter().any(|c| c.k() != first.k() || c.dim() != first.dim()) {
            return Err(Error::invalid("codebooks must share size and dimension"));
        }
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::invalid(format!("power exponent {rho} outside (0, 1]")));
        }
        Ok(Self {
            codebooks,
            rho,
            whitener: None,
        })
    }

    pub fn codebooks(&self) -> &[Codebook] {
        &self.codebooks
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn k(&self) -> usize {
        self.codebooks[0].k()
    }

    pub fn descriptor_dim(&self) -> usize {
        self.codebooks[0].dim()
    }

    /// `m * K * d`
    pub fn prewhitened_dim(&self) -> usize {
        self.codebooks.len() * self.k() * self.descriptor_dim()
    }

    pub fn whitener(&self) -> Option<&Whitener> {
        self.whitener.as_ref()
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.whitener.as_ref().map(Whitener::rank)
    }

    pub fn prewhiten(&self, x: &Descriptors) -> Result<Prewhitened> {
        let (k, d) = (self.k(), self.descriptor_dim());
        let mut vector = BlockVector::zeros(d, self.codebooks.len() * k);
        let mut zero_codebooks = 0;
        for (c, cb) in self.codebooks.iter().enumerate() {
            let mut v = vlad_aggregate(x, cb)?;
            power_normalize(&mut v, self.rho);
            if l2_normalize(&mut v).is_err() {
                zero_codebooks += 1;
                continue;
            }
            let v32: Vec<f32> = v.iter().map(|&x| x as f32).collect();
            for (j, block) in v32.chunks_exact(d).enumerate() {
                vector.push_block(c * k + j, block)?;
            }
        }
        Ok(Prewhitened { vector, zero_codebooks })
    }

    pub fn fit_whitening(&mut self, train: &[BlockVector], relative_epsilon: f64) -> Result<()> {
        if let Some(bad) = train.iter().find(|v| v.dim() != self.prewhitened_dim()) {
            return Err(Error::invalid(format!(
                "training encoding of dimension {} for an encoder of dimension {}",
                bad.dim(),
                self.prewhitened_dim()
            )));
        }
        self.whitener = Some(fit_whitener(train, relative_epsilon)?);
        Ok(())
    }

    pub fn whiten_batch(&self, xs: &[BlockVector]) -> Result<Vec<GlobalDescriptor>> {
        let w = self.whitener.as_ref().ok_or_else(|| Error::invalid("encoder has no fitted whitening"))?;
        Ok(w.apply_batch(xs)?
            .into_iter()
            .map(|mut values| {
                let degenerate = l2_normalize(&mut values).is_err();
                GlobalDescriptor { values, degenerate }
            })
            .collect())
    }

    pub fn whiten(&self, x: &BlockVector) -> Result<GlobalDescriptor> {
        Ok(self.whiten_batch(std::slice::from_ref(x))?.pop().unwrap())
    }

    pub fn encode(&self, x: &Descriptors) -> Result<GlobalDescriptor> {
        if self.whitener.is_none() {
            return Err(Error::invalid("encoder has no fitted whitening"));
        }
        self.whiten(&self.prewhiten(x)?.vector)
    }

    pub fn to_container(&self) -> Result<Container> {
        let w = self.whitener.as_ref().ok_or_else(|| Error::invalid("cannot serialize an unfitted encoder"))?;
        let mut c = Container::new(KIND);
        c.set("version", VERSION);
        c.set("m", self.codebooks.len());
        c.set("K", self.k());
        c.set("d", self.descriptor_dim());
        c.set("rho", self.rho);
        c.set("r", w.rank());
        let seeds: Vec<String> = self.codebooks.iter().map(|cb| cb.seed.to_string()).collect();
        c.set("seeds", seeds.join(","));
        c.set("whitening_epsilon", w.epsilon());
        c.set("n_support", w.support().len());
        c.push_f32("centroids", self.codebooks.iter().flat_map(|cb| cb.centroids().iter().copied()).collect());
        c.push_f32("mean", w.mean().iter().map(|&v| v as f32).collect());
        let mut offsets = vec![0u32];
        let mut index = Vec::new();
        let mut values = Vec::new();
        for s in w.support() {
            index.extend_from_slice(s.index());
            values.extend_from_slice(s.values());
            offsets.push(index.len() as u32);
        }
        c.push_u32("support_offsets", offsets);
        c.push_u32("support_index", index);
        c.push_f32("support_values", values);
        let coef = w.coefficients();
        let mut rows = Vec::with_capacity(coef.len());
        for i in 0..coef.nrows() {
            rows.extend(coef.row(i).iter().map(|&v| v as f32));
        }
        c.push_f32("coefficients", rows);
        c.push_f32("scales", w.scales().iter().map(|&v| v as f32).collect());
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind(KIND)?;
        let version: u32 = c.parse("version")?;
        if version != VERSION {
            return Err(Error::Container(format!("unsupported encoder version {version}")));
        }
        let (m, k, d, r, n): (usize, usize, usize, usize, usize) =
            (c.parse("m")?, c.parse("K")?, c.parse("d")?, c.parse("r")?, c.parse("n_support")?);
        let rho: f64 = c.parse("rho")?;
        let epsilon: f64 = c.parse("whitening_epsilon")?;
        let seeds: Vec<u64> = c
            .get("seeds")?
            .split(',')
            .map(|s| s.parse().map_err(|_| Error::Container(format!("bad seed `{s}`"))))
            .collect::<Result<_>>()?;
        if seeds.len() != m {
            return Err(Error::Container("seed count does not match m".into()));
        }
        let centroids = c.f32_section("centroids")?;
        if centroids.len() != m * k * d {
            return Err(Error::Container("centroid section has the wrong size".into()));
        }
        let codebooks = centroids
            .chunks_exact(k * d)
            .zip(&seeds)
            .map(|(chunk, &seed)| Codebook::new(k, d, chunk.to_vec(), seed))
            .collect::<Result<Vec<_>>>()?;
        let mut enc = Self::new(codebooks, rho)?;

        let n_blocks = m * k;
        let offsets = c.u32_section("support_offsets")?;
        let index = c.u32_section("support_index")?;
        let values = c.f32_section("support_values")?;
        let well_formed = offsets.len() == n + 1
            && offsets[0] == 0
            && offsets.windows(2).all(|w| w[0] <= w[1])
            && offsets[n] as usize == index.len()
            && values.len() == index.len() * d;
        if !well_formed {
            return Err(Error::Container("support sections are inconsistent".into()));
        }
        let support = offsets
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0] as usize, w[1] as usize);
                BlockVector::from_parts(d, n_blocks, index[a..b].to_vec(), values[a * d..b * d].to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        let coef = c.f32_section("coefficients")?;
        if coef.len() != r * n {
            return Err(Error::Container("coefficient section has the wrong size".into()));
        }
        let coefficients = DMatrix::from_row_iterator(r, n, coef.iter().map(|&v| v as f64));
        let scales = c.f32_section("scales")?.iter().map(|&v| v as f64).collect();
        let mean = c.f32_section("mean")?.iter().map(|&v| v as f64).collect();
        enc.whitener = Some(Whitener::assemble(d, n_blocks, mean, support, coefficients, scales, epsilon)?);
        Ok(enc)
    }

    /// The encoder as it will be after a save/load round trip. Evaluating
    /// with the quantized encoder makes stored and reloaded runs agree
    /// bit for bit.
    pub fn quantized(&self) -> Result<Self> {
        Self::from_container(&self.to_container()?)
    }
}
