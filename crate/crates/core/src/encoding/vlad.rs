//! Residual aggregation and the two normalizations applied to it.

use crate::error::{Error, Result};
use crate::features::Descriptors;

use super::kmeans::Codebook;

/// Sum of residuals to the nearest centroid, concatenated over centroids
/// (`K * d` values). Sums are compensated so the result does not depend on
/// descriptor order beyond the last bits.
pub fn vlad_aggregate(x: &Descriptors, cb: &Codebook) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::data("cannot aggregate an empty descriptor set"));
    }
    let d = cb.dim();
    if x.dim() != d {
        return Err(Error::invalid(format!(
            "descriptors of dimension {} against a {d}-d codebook",
            x.dim()
        )));
    }
    let mut sum = vec![0.0f64; cb.k() * d];
    let mut comp = vec![0.0f64; cb.k() * d];
    for row in x.iter() {
        let k = cb.nearest(row);
        let mu = cb.centroid(k);
        let (s, c) = (&mut sum[k * d..(k + 1) * d], &mut comp[k * d..(k + 1) * d]);
        for j in 0..d {
            let r = row[j] as f64 - mu[j] as f64;
            // Kahan step
            let y = r - c[j];
            let t = s[j] + y;
            c[j] = (t - s[j]) - y;
            s[j] = t;
        }
    }
    Ok(sum)
}

/// Elementwise `sign(v) * |v|^rho`.
pub fn power_normalize(v: &mut [f64], rho: f64) {
    if rho == 1.0 {
        return;
    }
    for x in v.iter_mut() {
        *x = x.signum() * x.abs().powf(rho);
        if *x == 0.0 {
            *x = 0.0;
        }
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales to unit Euclidean norm; a zero vector is an error.
pub fn l2_normalize(v: &mut [f64]) -> Result<()> {
    let n = l2_norm(v);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::numerical("cannot L2-normalize a zero or non-finite vector"));
    }
    for x in v.iter_mut() {
        *x /= n;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cb(rows: &[[f32; 2]]) -> Codebook {
        Codebook::new(rows.len(), 2, rows.iter().flatten().copied().collect(), 0).unwrap()
    }

    #[test]
    fn worked_example() {
        let c = cb(&[[0.0, 0.0], [10.0, 10.0]]);
        let x = Descriptors::new(2, vec![1.0, 0.0, 9.0, 10.0]).unwrap();
        assert_eq!(vlad_aggregate(&x, &c).unwrap(), vec![1.0, 0.0, -1.0, 0.0]);
    }

    #[test]
    fn descriptor_on_centroid_gives_zero() {
        let c = cb(&[[1.0, 2.0], [5.0, 5.0]]);
        let x = Descriptors::new(2, vec![1.0, 2.0]).unwrap();
        assert!(vlad_aggregate(&x, &c).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let c = cb(&[[0.0, 0.0]]);
        assert!(vlad_aggregate(&Descriptors::empty(2), &c).is_err());
        assert!(vlad_aggregate(&Descriptors::new(3, vec![0.0; 3]).unwrap(), &c).is_err());
    }

    #[test]
    fn power_normalization_examples() {
        let mut v = vec![4.0, -9.0, 0.0];
        power_normalize(&mut v, 0.5);
        assert_eq!(v, vec![2.0, -3.0, 0.0]);
        let mut w = vec![0.3, -2.0];
        power_normalize(&mut w, 1.0);
        assert_eq!(w, vec![0.3, -2.0]);
    }

    #[test]
    fn l2_examples() {
        let mut v = vec![3.0, 4.0];
        l2_normalize(&mut v).unwrap();
        assert_eq!(v, vec![0.6, 0.8]);
        let before = v.clone();
        l2_normalize(&mut v).unwrap();
        assert!(v.iter().zip(&before).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!(l2_normalize(&mut [0.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn duplicating_descriptors_doubles_output(rows in prop::collection::vec(prop::array::uniform2(-5.0f32..5.0), 1..15)) {
            let c = cb(&[[0.0, 0.0], [2.0, -1.0], [-3.0, 3.0]]);
            let x = Descriptors::from_rows(2, &rows).unwrap();
            let mut doubled = rows.clone();
            doubled.extend_from_slice(&rows);
            let once = vlad_aggregate(&x, &c).unwrap();
            let twice = vlad_aggregate(&Descriptors::from_rows(2, &doubled).unwrap(), &c).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn power_composition_and_sign(v in prop::collection::vec(-100.0f64..100.0, 0..20)) {
            let mut twice = v.clone();
            power_normalize(&mut twice, 0.5);
            power_normalize(&mut twice, 0.5);
            let mut once = v.clone();
            power_normalize(&mut once, 0.25);
            for ((a, b), o) in twice.iter().zip(&once).zip(&v) {
                prop_assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
                prop_assert_eq!(a.signum() * (*o != 0.0) as i32 as f64, o.signum() * (*o != 0.0) as i32 as f64);
                prop_assert_eq!(*a == 0.0, *o == 0.0);
            }
        }

        #[test]
        fn order_invariant(rows in prop::collection::vec(prop::array::uniform2(-5.0f32..5.0), 1..30), rot in 0usize..30) {
            let c = cb(&[[0.0, 0.0], [2.0, -1.0]]);
            let mut shuffled = rows.clone();
            let len = shuffled.len();
            shuffled.rotate_left(rot % len);
            shuffled.reverse();
            let a = vlad_aggregate(&Descriptors::from_rows(2, &rows).unwrap(), &c).unwrap();
            let b = vlad_aggregate(&Descriptors::from_rows(2, &shuffled).unwrap(), &c).unwrap();
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).abs() < 1e-10);
            }
        }
    }
}
