//! Tukey boxplot summaries.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Most extreme data points within 1.5·IQR of the quartiles.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub min: f64,
    pub max: f64,
    pub outliers: Vec<f64>,
}

/// Linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn boxplot(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("boxplot needs finite values"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|&x| x >= lo_fence && x <= hi_fence).collect();
    Ok(BoxStats {
        median,
        q1,
        q3,
        whisker_low: inside[0],
        whisker_high: *inside.last().unwrap(),
        min: v[0],
        max: *v.last().unwrap(),
        outliers: v.iter().copied().filter(|&x| x < lo_fence || x > hi_fence).collect(),
    })
}
