//! Synthetic electroluminescence cell images.
//!
//! The generator draws cells that share the coarse structure of real EL
//! crops: bright active area, dark vertical busbars, faint horizontal
//! fingers, cut corners on monocrystalline wafers and grain texture on
//! polycrystalline ones. Defects are dark crack polylines whose contrast
//! grows with the defect probability; fully defective cells also get a
//! disconnected (dark) region next to the crack. Used for tests, timing
//! and demos when the public dataset is not at hand.

use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::{CellRecord, DefectProbability, Wafer};
use crate::error::{Error, Result};
use crate::imaging::GrayImage;
use crate::rng;

/// Label counts of the public cell dataset (2624 cells), in the order
/// 0, 1/3, 2/3, 1.
pub const ELPV_PROBABILITY_COUNTS: [usize; 4] = [1508, 295, 106, 715];
/// Monocrystalline cells among the 2624.
pub const ELPV_MONO_COUNT: usize = 1074;

const PROBABILITIES: [DefectProbability; 4] = [
    DefectProbability::Zero,
    DefectProbability::OneThird,
    DefectProbability::TwoThirds,
    DefectProbability::One,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub cells: usize,
    /// Image side in pixels.
    pub side: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            cells: 2624,
            side: 300,
            seed: 0,
        }
    }
}

/// Splits `total` over `weights` proportionally (largest remainder, ties
/// to the earlier entry).
fn apportion(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    let mut counts: Vec<usize> = weights.iter().map(|&w| w * total / sum).collect();
    let mut rest: Vec<(usize, usize)> = weights.iter().enumerate().map(|(i, &w)| (w * total % sum, i)).collect();
    rest.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let missing = total - counts.iter().sum::<usize>();
    for &(_, i) in rest.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

/// Moves units from the largest entries so that every entry reaches
/// `min` (when the total allows it).
fn enforce_minimum(counts: &mut [usize], min: usize) {
    if counts.iter().sum::<usize>() < min * counts.len() {
        return;
    }
    while let Some(low) = counts.iter().position(|&c| c < min) {
        let high = (0..counts.len()).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).unwrap();
        counts[high] -= 1;
        counts[low] += 1;
    }
}

/// Index rows with the label and wafer proportions of the public dataset,
/// scaled to `cells`, in a seeded random order. Wafers are allocated
/// within each label so small sets still have at least three cells per
/// (wafer, label) stratum when `cells >= 24`; the training half of a
/// split then still has two per stratum. Image paths are
/// `images/cell####.png`.
pub fn synthetic_records(cells: usize, seed: u64) -> Vec<CellRecord> {
    let total: usize = ELPV_PROBABILITY_COUNTS.iter().sum();
    let mut per_label = apportion(cells, &ELPV_PROBABILITY_COUNTS);
    enforce_minimum(&mut per_label, 6);
    let mono_total = (ELPV_MONO_COUNT * cells + total / 2) / total;
    let mut mono = apportion(mono_total, &per_label);
    let mut items = Vec::with_capacity(cells);
    for (i, (&n, m)) in per_label.iter().zip(mono.iter_mut()).enumerate() {
        if n >= 6 {
            *m = (*m).clamp(3, n - 3);
        }
        for j in 0..n {
            let wafer = if j < *m { Wafer::Mono } else { Wafer::Poly };
            items.push((PROBABILITIES[i], wafer));
        }
    }
    let mut rng = rng::stream(seed, 0);
    rng::shuffle(&mut rng, &mut items);
    items
        .into_iter()
        .enumerate()
        .map(|(i, (probability, wafer))| CellRecord {
            image_path: format!("images/cell{i:04}.png"),
            probability,
            wafer,
        })
        .collect()
}

/// Renders one cell. Deterministic in all arguments.
pub fn synthetic_cell(side: usize, wafer: Wafer, probability: DefectProbability, seed: u64) -> Result<GrayImage> {
    if side < 16 {
        return Err(Error::invalid(format!("synthetic cells need a side of at least 16 px, got {side}")));
    }
    let mut rng = rng::stream(seed, 1);
    let s = side as f64;
    let mut img = vec![0f64; side * side];

    let base = 0.55 + 0.15 * rng::unit_f64(&mut rng);
    match wafer {
        Wafer::Mono => {
            let tilt = 0.1 * (rng::unit_f64(&mut rng) - 0.5);
            let cut = 0.12 * s;
            for y in 0..side {
                for x in 0..side {
                    let (fx, fy) = (x as f64, y as f64);
                    let r = ((fx - s / 2.0).powi(2) + (fy - s / 2.0).powi(2)).sqrt() / s;
                    let mut v = base * (1.0 - 0.25 * r * r) + tilt * (fx / s - 0.5);
                    let dx = fx.min(s - 1.0 - fx);
                    let dy = fy.min(s - 1.0 - fy);
                    if dx + dy < cut {
                        v = 0.04;
                    }
                    img[y * side + x] = v;
                }
            }
        }
        Wafer::Poly => {
            let grains = 30 + rng::index(&mut rng, 30);
            let centers: Vec<(f64, f64, f64)> = (0..grains)
                .map(|_| {
                    (
                        rng::unit_f64(&mut rng) * s,
                        rng::unit_f64(&mut rng) * s,
                        base * (0.7 + 0.5 * rng::unit_f64(&mut rng)),
                    )
                })
                .collect();
            for y in 0..side {
                for x in 0..side {
                    let (fx, fy) = (x as f64, y as f64);
                    let mut best = (f64::INFINITY, 0.0, f64::INFINITY);
                    for &(cx, cy, v) in &centers {
                        let d = (fx - cx).powi(2) + (fy - cy).powi(2);
                        if d < best.0 {
                            best = (d, v, best.0);
                        } else if d < best.2 {
                            best.2 = d;
                        }
                    }
                    // Darken grain boundaries slightly.
                    let edge = (best.2.sqrt() - best.0.sqrt()).min(2.0) / 2.0;
                    img[y * side + x] = best.1 * (0.85 + 0.15 * edge);
                }
            }
        }
    }

    // Fingers every ~s/30 rows and three busbars.
    let finger = (side / 30).max(3);
    for y in (finger / 2..side).step_by(finger) {
        for x in 0..side {
            img[y * side + x] *= 0.9;
        }
    }
    let bar = (side / 60).max(2);
    for k in 1..=3 {
        let x0 = k * side / 4 - bar / 2;
        for y in 0..side {
            for x in x0..(x0 + bar).min(side) {
                img[y * side + x] = 0.2 * img[y * side + x] + 0.05;
            }
        }
    }

    let severity = probability.value();
    if severity > 0.0 {
        let cracks = 1 + rng::index(&mut rng, 2);
        let mut path = Vec::new();
        for _ in 0..cracks {
            path.clear();
            let (mut x, mut y) = (rng::unit_f64(&mut rng) * s, rng::unit_f64(&mut rng) * s);
            let mut angle = rng::unit_f64(&mut rng) * std::f64::consts::TAU;
            let steps = (s * (0.5 + 0.5 * severity)) as usize;
            for _ in 0..steps {
                path.push((x, y));
                angle += 0.3 * (rng::unit_f64(&mut rng) - 0.5);
                x += angle.cos();
                y += angle.sin();
                if !(0.0..s).contains(&x) || !(0.0..s).contains(&y) {
                    break;
                }
            }
            let contrast = 0.35 + 0.6 * severity;
            let width = 0.8 + 1.2 * severity;
            let mut mask = vec![false; side * side];
            for &(px, py) in &path {
                let r = width.ceil() as isize + 1;
                for oy in -r..=r {
                    for ox in -r..=r {
                        let (qx, qy) = (px.round() as isize + ox, py.round() as isize + oy);
                        if qx < 0 || qy < 0 || qx >= side as isize || qy >= side as isize {
                            continue;
                        }
                        let d = ((qx as f64 - px).powi(2) + (qy as f64 - py).powi(2)).sqrt();
                        if d <= width {
                            mask[qy as usize * side + qx as usize] = true;
                        }
                    }
                }
            }
            for (v, &m) in img.iter_mut().zip(&mask) {
                if m {
                    *v *= 1.0 - contrast;
                }
            }
            if probability == DefectProbability::One && path.len() > 2 {
                // Disconnected region: the side of the crack's chord away
                // from the cell center, within a band around it.
                let (ax, ay) = path[0];
                let (bx, by) = path[path.len() - 1];
                let (nx, ny) = (-(by - ay), bx - ax);
                let center_side = (s / 2.0 - ax) * nx + (s / 2.0 - ay) * ny;
                let norm = (nx * nx + ny * ny).sqrt().max(1e-9);
                for yy in 0..side {
                    for xx in 0..side {
                        let side_val = (xx as f64 - ax) * nx + (yy as f64 - ay) * ny;
                        if side_val * center_side < 0.0 && side_val.abs() / norm < 0.3 * s {
                            img[yy * side + xx] *= 0.35;
                        }
                    }
                }
            }
        }
    }

    let noise = 0.02;
    let data = img
        .into_iter()
        .map(|v| (v + noise * (rng::unit_f64(&mut rng) - 0.5)).clamp(0.0, 1.0) as f32)
        .collect();
    GrayImage::new(side, side, data)
}

fn record_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64)
}

/// Writes `labels.csv` plus one PNG per record under `dir`.
pub fn write_synthetic_dataset(dir: &Path, spec: SyntheticSpec) -> Result<Vec<CellRecord>> {
    let records = synthetic_records(spec.cells, spec.seed);
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    use rayon::prelude::*;
    records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let img = synthetic_cell(spec.side, r.wafer, r.probability, record_seed(spec.seed, i))?;
            img.save_png(&dir.join(&r.image_path))
        })
        .collect::<Result<Vec<()>>>()?;
    let index = dir.join("labels.csv");
    std::fs::write(&index, index_text(&records)).map_err(|e| Error::io(&index, e))?;
    Ok(records)
}

/// Whitespace-separated index text (`path probability wafer`).
pub fn index_text(records: &[CellRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "{} {} {}", r.image_path, r.probability.value(), r.wafer);
    }
    out
}
