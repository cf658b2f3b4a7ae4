//! Mini-batch k-means (Sculley) with k-means++ seeding.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::features::Descriptors;
use crate::rng;

/// `K x d` centroid matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centroids: Vec<f32>,
    k: usize,
    dim: usize,
    pub seed: u64,
}

impl Codebook {
    pub fn new(k: usize, dim: usize, centroids: Vec<f32>, seed: u64) -> Result<Self> {
        if k == 0 || dim == 0 || centroids.len() != k * dim {
            return Err(Error::invalid(format!(
                "codebook of {} values cannot hold {k} centroids of dimension {dim}",
                centroids.len()
            )));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite centroid"));
        }
        Ok(Self {
            centroids,
            k,
            dim,
            seed,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroid(&self, i: usize) -> &[f32] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    /// Nearest centroid by squared Euclidean distance; ties go to the
    /// lowest index.
    pub fn nearest(&self, x: &[f32]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for k in 0..self.k {
            let d = sq_dist(x, self.centroid(k));
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

#[inline]
fn sq_dist64(a: &[f32], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y;
            d * d
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub batch_size: usize,
    pub iterations: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            k: 32,
            batch_size: 1024,
            iterations: 200,
        }
    }
}

fn has_k_distinct(sample: &Descriptors, k: usize) -> bool {
    let mut seen = HashSet::new();
    for row in sample.iter() {
        seen.insert(row.iter().map(|v| v.to_bits()).collect::<Vec<u32>>());
        if seen.len() >= k {
            return true;
        }
    }
    false
}

/// k-means++ seeding followed by `iterations` mini-batches; every center
/// moves towards its assigned points with learning rate `1 / count`.
pub fn fit_codebook(sample: &Descriptors, params: KMeansParams, seed: u64) -> Result<Codebook> {
    let (k, d, n) = (params.k, sample.dim(), sample.rows());
    if k == 0 {
        return Err(Error::invalid("codebook size must be at least 1"));
    }
    if params.batch_size == 0 {
        return Err(Error::invalid("mini-batch size must be positive"));
    }
    if n < k || !has_k_distinct(sample, k) {
        return Err(Error::data(format!(
            "codebook of size {k} needs at least {k} distinct descriptors"
        )));
    }
    let mut rng = rng::seeded(seed);

    // k-means++: first center uniform, then proportional to squared distance.
    let mut centers: Vec<f64> = Vec::with_capacity(k * d);
    let first = rng::index(&mut rng, n);
    centers.extend(sample.row(first).iter().map(|&v| v as f64));
    let mut closest: Vec<f64> = sample.iter().map(|x| sq_dist64(x, &centers[..d])).collect();
    for c in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng::unit_f64(&mut rng) * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in closest.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `target` just past the last positive weight
            pick.unwrap_or_else(|| closest.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            unreachable!("fewer distinct points than centers was rejected above")
        };
        centers.extend(sample.row(pick).iter().map(|&v| v as f64));
        let new = &centers[c * d..(c + 1) * d];
        for (i, x) in sample.iter().enumerate() {
            closest[i] = closest[i].min(sq_dist64(x, new));
        }
    }

    let mut counts = vec![0u64; k];
    let mut batch = vec![0usize; params.batch_size];
    let mut assign = vec![0usize; params.batch_size];
    for _ in 0..params.iterations {
        for b in batch.iter_mut() {
            *b = rng::index(&mut rng, n);
        }
        // assignments use the centers from the start of the batch
        for (a, &i) in assign.iter_mut().zip(&batch) {
            let x = sample.row(i);
            let mut best = (f64::INFINITY, 0);
            for c in 0..k {
                let dist = sq_dist64(x, &centers[c * d..(c + 1) * d]);
                if dist < best.0 {
                    best = (dist, c);
                }
            }
            *a = best.1;
        }
        for (&c, &i) in assign.iter().zip(&batch) {
            counts[c] += 1;
            let eta = 1.0 / counts[c] as f64;
            for (m, &x) in centers[c * d..(c + 1) * d].iter_mut().zip(sample.row(i)) {
                *m += eta * (x as f64 - *m);
            }
        }
    }

    Codebook::new(k, d, centers.iter().map(|&v| v as f32).collect(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n: usize, sep: f32, seed: u64) -> Descriptors {
        let mut r = rng::seeded(seed);
        let mut data = Vec::new();
        for i in 0..n {
            let cx = if i % 2 == 0 { 0.0 } else { sep };
            for base in [cx, 0.0] {
                let g: f64 = (0..12).map(|_| rng::unit_f64(&mut r)).sum::<f64>() - 6.0;
                data.push(base + 0.5 * g as f32);
            }
        }
        Descriptors::new(2, data).unwrap()
    }

    /// Full-batch Lloyd iterations from the two extreme points.
    fn lloyd(x: &Descriptors, mut c: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
        for _ in 0..100 {
            let mut sum = [[0.0f64; 2]; 2];
            let mut cnt = [0usize; 2];
            for p in x.iter() {
                let d = |c: &[f64; 2]| (p[0] as f64 - c[0]).powi(2) + (p[1] as f64 - c[1]).powi(2);
                let j = if d(&c[1]) < d(&c[0]) { 1 } else { 0 };
                sum[j][0] += p[0] as f64;
                sum[j][1] += p[1] as f64;
                cnt[j] += 1;
            }
            for j in 0..2 {
                c[j] = [sum[j][0] / cnt[j] as f64, sum[j][1] / cnt[j] as f64];
            }
        }
        c
    }

    #[test]
    fn two_blobs_match_lloyd() {
        let sep = 10.0;
        let x = blobs(2000, sep, 1);
        let oracle = lloyd(&x, [[-5.0, 0.0], [15.0, 0.0]]);
        let cb = fit_codebook(&x, KMeansParams { k: 2, ..Default::default() }, 9).unwrap();
        for o in oracle {
            let hit = (0..2).any(|j| {
                let c = cb.centroid(j);
                ((c[0] as f64 - o[0]).powi(2) + (c[1] as f64 - o[1]).powi(2)).sqrt() < 0.05 * sep as f64
            });
            assert!(hit, "no centroid near {o:?}: {:?}", cb.centroids());
        }
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let x = blobs(3000, 4.0, 2);
        let cb = fit_codebook(&x, KMeansParams { k: 1, ..Default::default() }, 3).unwrap();
        let n = x.rows() as f64;
        for j in 0..2 {
            let mean: f64 = x.iter().map(|r| r[j] as f64).sum::<f64>() / n;
            assert!((cb.centroid(0)[j] as f64 - mean).abs() < 0.05, "{j}: {} vs {mean}", cb.centroid(0)[j]);
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let x = blobs(500, 3.0, 4);
        let p = KMeansParams { k: 4, batch_size: 64, iterations: 30 };
        assert_eq!(fit_codebook(&x, p, 5).unwrap(), fit_codebook(&x, p, 5).unwrap());
        assert_ne!(fit_codebook(&x, p, 5).unwrap(), fit_codebook(&x, p, 6).unwrap());
    }

    #[test]
    fn too_few_distinct_points() {
        let x = Descriptors::new(2, vec![1.0, 1.0, 1.0, 1.0, 2.0, 2.0]).unwrap();
        assert!(fit_codebook(&x, KMeansParams { k: 3, ..Default::default() }, 0).is_err());
        assert!(fit_codebook(&x, KMeansParams { k: 2, batch_size: 4, iterations: 3 }, 0).is_ok());
        assert!(fit_codebook(&x, KMeansParams { k: 0, ..Default::default() }, 0).is_err());
    }

    #[test]
    fn nearest_breaks_ties_low() {
        let cb = Codebook::new(2, 1, vec![-1.0, 1.0], 0).unwrap();
        assert_eq!(cb.nearest(&[0.0]), 0);
        assert_eq!(cb.nearest(&[0.1]), 1);
    }
}
