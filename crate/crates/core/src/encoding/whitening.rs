//! PCA whitening of concatenated encodings.
//!
//! Encodings are often far wider than the training set (5·K·128 for SIFT,
//! millions of dimensions for HOG), so the eigenproblem is solved on the
//! `N x N` Gram matrix of centered training rows. A principal direction is
//! kept implicitly as a combination of training rows: for a Gram
//! eigenpair `(Λ, u)` the unit direction is `X_cᵀ u / √Λ` and the
//! covariance eigenvalue is `Λ / N`.
//!
//! Components with eigenvalue at or below `epsilon = relative_epsilon ·
//! λ_max` are dropped; the rest are divided by `√λ`, so whitened training
//! data has identity covariance (normalized by `N`) to rounding error.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

use super::block::BlockVector;

/// Default regularizer relative to the largest eigenvalue.
pub const DEFAULT_RELATIVE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Whitener {
    block_len: usize,
    n_blocks: usize,
    mean: Vec<f64>,
    support: Vec<BlockVector>,
    /// `r x N`; row k is `u_k / √Λ_k`.
    coefficients: DMatrix<f64>,
    scales: Vec<f64>,
    epsilon: f64,
    // derived
    dense_support: Option<DMatrix<f64>>,
    support_dot_mean: Vec<f64>,
    mean_sq: f64,
}

fn mostly_dense(rows: &[BlockVector]) -> bool {
    let stored: usize = rows.iter().map(|r| r.stored_blocks()).sum();
    let total = rows.len() * rows[0].n_blocks();
    2 * stored >= total
}

/// Columns are the rows, minus `shift` (D x N, column-major).
fn dense_columns(rows: &[BlockVector], shift: Option<&[f64]>) -> DMatrix<f64> {
    let d = rows[0].dim();
    let mut m = DMatrix::<f64>::zeros(d, rows.len());
    for (j, r) in rows.iter().enumerate() {
        let mut col = m.column_mut(j);
        let col = col.as_mut_slice();
        r.add_into(col);
        if let Some(mu) = shift {
            for (c, m) in col.iter_mut().zip(mu) {
                *c -= m;
            }
        }
    }
    m
}

impl Whitener {
    pub fn fit(rows: &[BlockVector], relative_epsilon: f64) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::data(format!("whitening needs at least 2 encodings, got {n}")));
        }
        if !rows.iter().all(|r| r.same_shape(&rows[0])) {
            return Err(Error::invalid("encodings differ in shape"));
        }
        if !(relative_epsilon > 0.0) {
            return Err(Error::invalid("whitening epsilon must be positive"));
        }
        if rows.iter().all(|r| r == &rows[0]) {
            return Err(Error::data("all training encodings are identical; covariance is zero"));
        }
        let (block_len, n_blocks) = (rows[0].block_len(), rows[0].n_blocks());
        let mut mean = vec![0.0f64; rows[0].dim()];
        for r in rows {
            r.add_into(&mut mean);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);

        let gram = if mostly_dense(rows) {
            let xc = dense_columns(rows, Some(&mean));
            let mut g = DMatrix::<f64>::zeros(n, n);
            g.gemm_tr(1.0, &xc, &xc, 0.0);
            g
        } else {
            let a: Vec<f64> = rows.iter().map(|r| r.dot_dense(&mean)).collect();
            let mm: f64 = mean.iter().map(|m| m * m).sum();
            let mut g = DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                for j in 0..=i {
                    let v = rows[i].dot(&rows[j]) - a[i] - a[j] + mm;
                    g[(i, j)] = v;
                    g[(j, i)] = v;
                }
            }
            g
        };
        if gram.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite value in the Gram matrix"));
        }

        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
        let lambda_max = eig.eigenvalues[order[0]] / n as f64;
        if !(lambda_max > 0.0) {
            return Err(Error::data("training encodings have zero covariance"));
        }
        let epsilon = relative_epsilon * lambda_max;
        let kept: Vec<usize> = order
            .into_iter()
            .filter(|&i| eig.eigenvalues[i] / n as f64 > epsilon)
            .collect();
        let r = kept.len();
        let mut coefficients = DMatrix::<f64>::zeros(r, n);
        let mut scales = Vec::with_capacity(r);
        for (k, &i) in kept.iter().enumerate() {
            let big = eig.eigenvalues[i];
            let u = eig.eigenvectors.column(i);
            // sign convention: largest-magnitude entry positive
            let pivot = u.iter().enumerate().fold(0, |best, (j, v)| if v.abs() > u[best].abs() { j } else { best });
            let sign = if u[pivot] < 0.0 { -1.0 } else { 1.0 };
            let s = sign / big.sqrt();
            for j in 0..n {
                coefficients[(k, j)] = u[j] * s;
            }
            scales.push((big / n as f64).sqrt());
        }
        Self::assemble(block_len, n_blocks, mean, rows.to_vec(), coefficients, scales, epsilon)
    }

    pub(crate) fn assemble(
        block_len: usize,
        n_blocks: usize,
        mean: Vec<f64>,
        support: Vec<BlockVector>,
        coefficients: DMatrix<f64>,
        scales: Vec<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        let dim = block_len * n_blocks;
        let shapes_ok = mean.len() == dim
            && !support.is_empty()
            && support.iter().all(|s| s.block_len() == block_len && s.n_blocks() == n_blocks)
            && coefficients.ncols() == support.len()
            && coefficients.nrows() == scales.len();
        if !shapes_ok {
            return Err(Error::Container("inconsistent whitening parameters".into()));
        }
        if scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::numerical("whitening scales must be positive"));
        }
        let dense_support = mostly_dense(&support).then(|| dense_columns(&support, None));
        let support_dot_mean = support.iter().map(|s| s.dot_dense(&mean)).collect();
        let mean_sq = mean.iter().map(|m| m * m).sum();
        Ok(Self {
            block_len,
            n_blocks,
            mean,
            support,
            coefficients,
            scales,
            epsilon,
            dense_support,
            support_dot_mean,
            mean_sq,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.block_len * self.n_blocks
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    /// Number of retained components.
    pub fn rank(&self) -> usize {
        self.scales.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn support(&self) -> &[BlockVector] {
        &self.support
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Retained covariance eigenvalues, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.scales.iter().map(|s| s * s).collect()
    }

    pub fn apply(&self, x: &BlockVector) -> Result<Vec<f64>> {
        Ok(self.apply_batch(std::slice::from_ref(x))?.pop().unwrap())
    }

    pub fn apply_batch(&self, xs: &[BlockVector]) -> Result<Vec<Vec<f64>>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(bad) = xs.iter().find(|x| x.block_len() != self.block_len || x.n_blocks() != self.n_blocks) {
            return Err(Error::invalid(format!(
                "encoding of dimension {} passed to a whitener for dimension {}",
                bad.dim(),
                self.input_dim()
            )));
        }
        let n = self.support.len();
        // projections onto centered training rows: (s_j - μ)·(x - μ)
        let mut p = match &self.dense_support {
            Some(s) => {
                let xm = dense_columns(xs, None);
                let mut p = DMatrix::<f64>::zeros(n, xs.len());
                p.gemm_tr(1.0, s, &xm, 0.0);
                p
            }
            None => DMatrix::from_fn(n, xs.len(), |j, b| self.support[j].dot(&xs[b])),
        };
        for (b, x) in xs.iter().enumerate() {
            let xm = x.dot_dense(&self.mean);
            for j in 0..n {
                p[(j, b)] += self.mean_sq - self.support_dot_mean[j] - xm;
            }
        }
        let z = &self.coefficients * p;
        Ok((0..xs.len())
            .map(|b| z.column(b).iter().zip(&self.scales).map(|(v, s)| v / s).collect())
            .collect())
    }
}

pub fn fit_whitener(rows: &[BlockVector], relative_epsilon: f64) -> Result<Whitener> {
    Whitener::fit(rows, relative_epsilon)
}
