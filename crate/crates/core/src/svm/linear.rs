//! L2-regularized squared-hinge SVM by dual coordinate descent.
//!
//! The bias is learned as the weight of a constant feature 1, so it is
//! regularized together with `w`:
//!
//! `min ½(‖w‖² + b²) + Σ C_i max(0, 1 − y_i(w·x_i + b))²`, `C_i = C·weight_i`.

use crate::error::{Error, Result};
use crate::rng;

use super::{check_training_set, dot};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearParams {
    pub c: f64,
    /// Stop when every projected gradient is below this in magnitude.
    pub tolerance: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl LinearParams {
    pub fn new(c: f64) -> Self {
        Self {
            c,
            tolerance: 1e-4,
            max_epochs: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub c: f64,
    /// Dual variables at termination, one per training sample.
    pub alpha: Vec<f64>,
    pub epochs: usize,
    pub converged: bool,
}

impl LinearSvmModel {
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.w.len() {
            return Err(Error::invalid(format!(
                "feature vector of dimension {} for a model of dimension {}",
                x.len(),
                self.w.len()
            )));
        }
        Ok(dot(&self.w, x) + self.b)
    }
}

/// Primal objective of `(w, b)` on a weighted training set.
pub fn linear_primal_objective(w: &[f64], b: f64, x: &[Vec<f64>], y: &[f64], c: &[f64]) -> f64 {
    let reg = 0.5 * (dot(w, w) + b * b);
    let loss: f64 = x
        .iter()
        .zip(y)
        .zip(c)
        .map(|((xi, &yi), &ci)| {
            let m = (1.0 - yi * (dot(w, xi) + b)).max(0.0);
            ci * m * m
        })
        .sum();
    reg + loss
}

/// Dual objective (to be maximized) of dual variables `alpha`.
pub fn linear_dual_objective(alpha: &[f64], x: &[Vec<f64>], y: &[f64], c: &[f64]) -> f64 {
    let d = x.first().map_or(0, Vec::len);
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for ((a, xi), yi) in alpha.iter().zip(x).zip(y) {
        for (wj, xj) in w.iter_mut().zip(xi) {
            *wj += a * yi * xj;
        }
        b += a * yi;
    }
    let sum: f64 = alpha.iter().sum();
    let quad: f64 = alpha.iter().zip(c).map(|(a, ci)| a * a / (4.0 * ci)).sum();
    sum - 0.5 * (dot(&w, &w) + b * b) - quad
}

/// `y` holds ±1, `weights` the per-sample multipliers of `C`.
pub fn train_linear(x: &[Vec<f64>], y: &[f64], weights: &[f64], params: LinearParams) -> Result<LinearSvmModel> {
    let d = check_training_set(x, y, weights)?;
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::invalid(format!("C must be positive, got {}", params.c)));
    }
    if !(params.tolerance > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let n = x.len();
    let diag: Vec<f64> = weights.iter().map(|&wt| 0.5 / (params.c * wt)).collect();
    // ‖x̂_i‖² + D_ii with the constant bias feature included
    let qd: Vec<f64> = x.iter().zip(&diag).map(|(xi, di)| dot(xi, xi) + 1.0 + di).collect();

    let mut alpha = vec![0.0f64; n];
    let mut w = vec![0.0f64; d];
    let mut b = 0.0f64;
    let mut index: Vec<usize> = (0..n).collect();
    let mut active = n;
    let mut rng = rng::seeded(params.seed);
    let mut pg_max_old = f64::INFINITY;
    let mut epochs = 0;
    let mut converged = false;

    while epochs < params.max_epochs {
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        rng::shuffle(&mut rng, &mut index[..active]);
        let mut s = 0;
        while s < active {
            let i = index[s];
            let yi = y[i];
            let g = yi * (dot(&w, &x[i]) + b) - 1.0 + diag[i] * alpha[i];
            let mut pg = 0.0;
            if alpha[i] == 0.0 {
                if g > pg_max_old {
                    // shrink: bound-constrained and unlikely to move
                    active -= 1;
                    index.swap(s, active);
                    continue;
                } else if g < 0.0 {
                    pg = g;
                }
            } else {
                pg = g;
            }
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).max(0.0);
                let step = (alpha[i] - old) * yi;
                for (wj, xj) in w.iter_mut().zip(&x[i]) {
                    *wj += step * xj;
                }
                b += step;
            }
            s += 1;
        }
        epochs += 1;
        if pg_max.max(-pg_min) < params.tolerance || active == 0 {
            if active == n {
                converged = true;
                break;
            }
            // re-check the shrunk variables before stopping
            active = n;
            pg_max_old = f64::INFINITY;
            continue;
        }
        pg_max_old = if pg_max <= 0.0 { f64::INFINITY } else { pg_max };
    }
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::numerical("linear SVM diverged"));
    }
    Ok(LinearSvmModel {
        w,
        b,
        c: params.c,
        alpha,
        epochs,
        converged,
    })
}
