//! RBF-kernel SVM by SMO with second-order working-set selection.
//!
//! Solves `min ½ αᵀQα − Σα` subject to `0 ≤ α_i ≤ C_i`, `yᵀα = 0`, with
//! `Q_ij = y_i y_j exp(−γ‖x_i − x_j‖²)` and `C_i = C·weight_i`.

use std::collections::HashMap;

use crate::error::{Error, Result};

use super::{check_training_set, dot};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfParams {
    pub c: f64,
    pub gamma: f64,
    /// Maximal KKT violation at termination.
    pub tolerance: f64,
    pub cache_mb: usize,
    pub max_iterations: usize,
}

impl RbfParams {
    pub fn new(c: f64, gamma: f64) -> Self {
        Self {
            c,
            gamma,
            tolerance: 1e-3,
            cache_mb: 200,
            max_iterations: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbfSvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// `α_i y_i` for each support vector.
    pub coefficients: Vec<f64>,
    pub b: f64,
    pub gamma: f64,
    pub c: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl RbfSvmModel {
    pub fn dim(&self) -> Option<usize> {
        self.support_vectors.first().map(Vec::len)
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if let Some(d) = self.dim() {
            if d != x.len() {
                return Err(Error::invalid(format!(
                    "feature vector of dimension {} for a model of dimension {d}",
                    x.len()
                )));
            }
        }
        let xx = dot(x, x);
        let s: f64 = self
            .support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, a)| a * rbf(self.gamma, dot(sv, sv), xx, dot(sv, x)))
            .sum();
        Ok(s + self.b)
    }
}

#[inline]
fn rbf(gamma: f64, aa: f64, bb: f64, ab: f64) -> f64 {
    (-gamma * (aa + bb - 2.0 * ab).max(0.0)).exp()
}

/// Least-recently-used cache of kernel matrix rows.
struct KernelCache<'a> {
    x: &'a [Vec<f64>],
    norms: Vec<f64>,
    gamma: f64,
    rows: HashMap<usize, (u64, Vec<f64>)>,
    capacity: usize,
    clock: u64,
}

impl<'a> KernelCache<'a> {
    fn new(x: &'a [Vec<f64>], gamma: f64, cache_mb: usize) -> Self {
        let row_bytes = (x.len() * 8).max(1);
        Self {
            norms: x.iter().map(|v| dot(v, v)).collect(),
            x,
            gamma,
            rows: HashMap::new(),
            capacity: (cache_mb * (1 << 20) / row_bytes).max(2),
            clock: 0,
        }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        self.clock += 1;
        let clock = self.clock;
        if !self.rows.contains_key(&i) {
            if self.rows.len() >= self.capacity {
                let oldest = *self.rows.iter().min_by_key(|(_, (t, _))| *t).unwrap().0;
                self.rows.remove(&oldest);
            }
            let xi = &self.x[i];
            let ni = self.norms[i];
            let row = self
                .x
                .iter()
                .zip(&self.norms)
                .map(|(xj, &nj)| rbf(self.gamma, ni, nj, dot(xi, xj)))
                .collect();
            self.rows.insert(i, (clock, row));
        }
        let entry = self.rows.get_mut(&i).unwrap();
        entry.0 = clock;
        &entry.1
    }
}

/// Dual objective `½ αᵀQα − Σα` (minimized by SMO).
pub fn rbf_dual_objective(alpha: &[f64], x: &[Vec<f64>], y: &[f64], gamma: f64) -> f64 {
    let mut quad = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * rbf(gamma, dot(&x[i], &x[i]), dot(&x[j], &x[j]), dot(&x[i], &x[j]));
        }
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}

/// Returns the model together with the full dual vector.
pub fn train_rbf_with_dual(
    x: &[Vec<f64>],
    y: &[f64],
    weights: &[f64],
    params: RbfParams,
) -> Result<(RbfSvmModel, Vec<f64>)> {
    check_training_set(x, y, weights)?;
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::invalid(format!("C must be positive, got {}", params.c)));
    }
    if !(params.gamma > 0.0 && params.gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma must be positive, got {}", params.gamma)));
    }
    let n = x.len();
    let cap: Vec<f64> = weights.iter().map(|w| w * params.c).collect();
    let mut alpha = vec![0.0f64; n];
    let mut grad = vec![-1.0f64; n];
    let mut kernel = KernelCache::new(x, params.gamma, params.cache_mb);
    let qd = vec![1.0f64; n]; // k(x, x) = 1
    let upper = |a: f64, c: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iterations {
        // i: maximal violating index in I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            let in_up = if y[t] > 0.0 { !upper(alpha[t], cap[t]) } else { !lower(alpha[t]) };
            if in_up && -y[t] * grad[t] >= gmax {
                if -y[t] * grad[t] > gmax || i_sel == usize::MAX {
                    gmax = -y[t] * grad[t];
                    i_sel = t;
                }
            }
        }
        // j: second-order choice in I_low
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut best_obj = f64::INFINITY;
        if i_sel != usize::MAX {
            let ki = kernel.row(i_sel).to_vec();
            for t in 0..n {
                let in_low = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t], cap[t]) };
                if !in_low {
                    continue;
                }
                let ytg = y[t] * grad[t];
                gmax2 = gmax2.max(ytg);
                let diff = gmax + ytg;
                if diff > 0.0 {
                    let mut a = qd[i_sel] + qd[t] - 2.0 * ki[t];
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let obj = -diff * diff / a;
                    if obj < best_obj {
                        best_obj = obj;
                        j_sel = t;
                    }
                }
            }
        }
        if i_sel == usize::MAX || j_sel == usize::MAX || gmax + gmax2 < params.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let (i, j) = (i_sel, j_sel);
        let ki = kernel.row(i).to_vec();
        let kj = kernel.row(j).to_vec();
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (ci, cj) = (cap[i], cap[j]);
        if y[i] != y[j] {
            let mut quad = qd[i] + qd[j] + 2.0 * ki[j] * y[i] * y[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let mut quad = qd[i] + qd[j] - 2.0 * ki[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
    }

    // bias from free variables, or the midpoint of the feasible interval
    let (mut ub, mut lb, mut sum_free, mut n_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t], cap[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    if !rho.is_finite() || alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::numerical("SMO produced non-finite values"));
    }
    let mut support_vectors = Vec::new();
    let mut coefficients = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support_vectors.push(x[t].clone());
            coefficients.push(alpha[t] * y[t]);
        }
    }
    let model = RbfSvmModel {
        support_vectors,
        coefficients,
        b: -rho,
        gamma: params.gamma,
        c: params.c,
        iterations,
        converged,
    };
    Ok((model, alpha))
}

pub fn train_rbf(x: &[Vec<f64>], y: &[f64], weights: &[f64], params: RbfParams) -> Result<RbfSvmModel> {
    Ok(train_rbf_with_dual(x, y, weights, params)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xor_is_separable_with_a_kernel() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let y = [1.0, 1.0, -1.0, -1.0];
        let m = train_rbf(&x, &y, &[1.0; 4], RbfParams::new(1e4, 1.0)).unwrap();
        assert!(m.converged);
        for (xi, yi) in x.iter().zip(&y) {
            assert!(m.decision_value(xi).unwrap() * yi > 0.0);
        }
        assert!(m.decision_value(&[0.0]).is_err());
    }

    #[test]
    fn kkt_conditions_hold() {
        let x: Vec<Vec<f64>> = (0..24).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()]).collect();
        let y: Vec<f64> = (0..24).map(|i| if (i * 7) % 3 == 0 { 1.0 } else { -1.0 }).collect();
        let w: Vec<f64> = (0..24).map(|i| 0.5 + (i % 4) as f64 * 0.25).collect();
        let (m, alpha) = train_rbf_with_dual(&x, &y, &w, RbfParams::new(3.0, 2.0)).unwrap();
        assert!(m.converged);
        let eps = 1e-3;
        for t in 0..x.len() {
            let margin = y[t] * m.decision_value(&x[t]).unwrap();
            let c = 3.0 * w[t];
            assert!(alpha[t] >= 0.0 && alpha[t] <= c + 1e-12);
            if alpha[t] == 0.0 {
                assert!(margin >= 1.0 - eps, "t={t} margin {margin}");
            } else if alpha[t] >= c {
                assert!(margin <= 1.0 + eps, "t={t} margin {margin}");
            } else {
                assert!((margin - 1.0).abs() <= eps, "t={t} margin {margin}");
            }
        }
        let balance: f64 = alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(balance.abs() < 1e-9);
        assert_eq!(m.coefficients.len(), alpha.iter().filter(|&&a| a > 0.0).count());
        assert!(m.coefficients.iter().all(|&a| a != 0.0));
    }

    #[test]
    fn kernel_cache_evicts_but_stays_correct() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.1]).collect();
        let mut small = KernelCache::new(&x, 1.0, 0);
        small.capacity = 2;
        let first = small.row(3).to_vec();
        small.row(4);
        small.row(5);
        assert_eq!(small.rows.len(), 2);
        assert_eq!(small.row(3), &first[..]);
    }
}
