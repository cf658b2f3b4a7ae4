//! Acceptance criteria, one status line each.
//!
//! Criteria that need the public ELPV dataset read it from `ELPV_DIR` (the
//! directory holding `labels.csv` and `images/`) and report BLOCKED when it
//! is unset. `ELPV_REQUIRE=1` turns BLOCKED into a failure; `ELPV_CACHE`
//! names an optional descriptor cache directory for the real-data runs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use elpv_core::dataset::{
    class_weights, stratified_split, to_labeled, CellRecord, Label, LabeledSample, Split, SplitSpec,
};
use elpv_core::encoding::{
    fit_codebooks, fit_whitener, vlad_aggregate, BlockVector, Codebook, VladEncoder,
    DEFAULT_RELATIVE_EPSILON,
};
use elpv_core::eval::{precision_recall_f1, roc_auc, ConfusionMatrix, Group};
use elpv_core::features::Descriptors;
use elpv_core::pipeline::{
    extract_cell, fit_classifier, learning_curve, run_grid_sweep, run_predict, run_train, Classifier, Dataset,
    ImageSource, PipelineConfig, RunOptions, MODEL_FILE,
};
use elpv_core::rng::{self, Rng};
use elpv_core::svm::{
    linear_primal_objective, rbf_dual_objective, train_linear, train_rbf_with_dual, LinearParams, RbfParams,
};
use elpv_core::synthetic::{synthetic_records, write_synthetic_dataset, SyntheticSpec};
use elpv_core::Result;

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Pass,
    Fail,
    Blocked,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Blocked => "BLOCKED",
        })
    }
}

struct Outcome {
    status: Status,
    detail: String,
}

fn pass_if(ok: bool, detail: String) -> Outcome {
    Outcome {
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn blocked(detail: &str) -> Outcome {
    Outcome {
        status: Status::Blocked,
        detail: detail.to_owned(),
    }
}

fn elpv_dir() -> Option<PathBuf> {
    std::env::var_os("ELPV_DIR").map(PathBuf::from)
}

fn real_options() -> RunOptions {
    RunOptions {
        cache_dir: std::env::var_os("ELPV_CACHE").map(PathBuf::from),
    }
}

const NO_DATA: &str = "ELPV_DIR not set";

fn uniform(r: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng::unit_f64(r)
}

// ---------------------------------------------------------------- 1: VLAD

fn criterion_vlad() -> Result<Outcome> {
    let start = Instant::now();
    let mut r = rng::seeded(101);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let t = 1 + rng::index(&mut r, 20);
        let k = 1 + rng::index(&mut r, 4);
        let d = 1 + rng::index(&mut r, 3);
        let mut gen = |n: usize| -> Vec<f32> { (0..n).map(|_| uniform(&mut r, -2.0, 2.0) as f32).collect() };
        let centroids = gen(k * d);
        let data = gen(t * d);
        let cb = Codebook::new(k, d, centroids.clone(), 0)?;
        let x = Descriptors::new(d, data.clone())?;
        let got = vlad_aggregate(&x, &cb)?;

        // ν_{k,j} = Σ_t [NN(x_t) = k] (x_{t,j} − μ_{k,j}), NN by exhaustive search
        let mut want = vec![0.0f64; k * d];
        for ti in 0..t {
            let row = &data[ti * d..(ti + 1) * d];
            let mut best = (f64::INFINITY, 0);
            for ki in 0..k {
                let dist: f64 = (0..d)
                    .map(|j| (row[j] as f64 - centroids[ki * d + j] as f64).powi(2))
                    .sum();
                if dist < best.0 {
                    best = (dist, ki);
                }
            }
            for ki in 0..k {
                for j in 0..d {
                    if ki == best.1 {
                        want[ki * d + j] += row[j] as f64 - centroids[ki * d + j] as f64;
                    }
                }
            }
        }
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
    }
    let elapsed = start.elapsed();
    Ok(pass_if(
        worst <= 1e-12 && elapsed < Duration::from_secs(1),
        format!("200 instances, max |Δ| = {worst:.2e} (≤ 1e-12), {elapsed:.2?} (< 1 s)"),
    ))
}

// ----------------------------------------------------------------- 2: SVM

/// Gradient descent on the (smooth, strongly convex) squared-hinge primal
/// in `(w, b)` with step `1/L`, run until the gradient vanishes.
fn primal_oracle(x: &[Vec<f64>], y: &[f64], c: &[f64]) -> f64 {
    let d = x[0].len();
    let lip = 1.0 + 2.0 * x.iter().zip(c).map(|(xi, ci)| ci * (1.0 + xi.iter().map(|v| v * v).sum::<f64>())).sum::<f64>();
    let mut theta = vec![0.0f64; d + 1];
    for _ in 0..2_000_000 {
        let mut grad = theta.clone();
        for ((xi, &yi), &ci) in x.iter().zip(y).zip(c) {
            let f: f64 = xi.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>() + theta[d];
            let m = 1.0 - yi * f;
            if m > 0.0 {
                let g = -2.0 * ci * m * yi;
                for j in 0..d {
                    grad[j] += g * xi[j];
                }
                grad[d] += g;
            }
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < 1e-13 {
            break;
        }
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= g / lip;
        }
    }
    linear_primal_objective(&theta[..d], theta[d], x, y, c)
}

/// Euclidean projection onto `{0 ≤ a ≤ u, yᵀa = 0}` by bisection on the
/// multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], u: &[f64]) -> Vec<f64> {
    let at = |nu: f64| -> Vec<f64> { v.iter().zip(y).zip(u).map(|((vi, yi), ui)| (vi - nu * yi).clamp(0.0, *ui)).collect() };
    let balance = |a: &[f64]| -> f64 { a.iter().zip(y).map(|(ai, yi)| ai * yi).sum() };
    let bound = v.iter().map(|t| t.abs()).fold(0.0, f64::max) + u.iter().fold(0.0, |m: f64, &t| m.max(t)) + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        // balance(at(ν)) is nonincreasing in ν
        if balance(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Accelerated projected gradient on the dense dual QP
/// `min ½aᵀQa − Σa  s.t. 0 ≤ a_i ≤ C·w_i, yᵀa = 0`.
fn dual_oracle(x: &[Vec<f64>], y: &[f64], u: &[f64], gamma: f64) -> f64 {
    let n = x.len();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d2: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                    y[i] * y[j] * (-gamma * d2).exp()
                })
                .collect()
        })
        .collect();
    let lip = q.iter().map(|row| row.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut a = vec![0.0f64; n];
    let mut z = a.clone();
    let mut t = 1.0f64;
    for _ in 0..40_000 {
        let grad: Vec<f64> = (0..n).map(|i| q[i].iter().zip(&z).map(|(qi, zi)| qi * zi).sum::<f64>() - 1.0).collect();
        let step: Vec<f64> = z.iter().zip(&grad).map(|(zi, gi)| zi - gi / lip).collect();
        let next = project(&step, y, u);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next.iter().zip(&a).map(|(nx, ax)| nx + (t - 1.0) / t_next * (nx - ax)).collect();
        a = next;
        t = t_next;
    }
    rbf_dual_objective(&a, x, y, gamma)
}

fn random_set(r: &mut Rng, n: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    loop {
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![uniform(r, -1.0, 1.0), uniform(r, -1.0, 1.0)]).collect();
        // noisy linear rule, so sets are rarely separable
        let y: Vec<f64> = x
            .iter()
            .map(|p| if p[0] + 0.5 * p[1] + uniform(r, -0.6, 0.6) > 0.0 { 1.0 } else { -1.0 })
            .collect();
        let w: Vec<f64> = (0..n).map(|_| uniform(r, 0.5, 2.0)).collect();
        if y.contains(&1.0) && y.contains(&-1.0) {
            return (x, y, w);
        }
    }
}

fn criterion_svm() -> Result<Outcome> {
    let start = Instant::now();
    let mut r = rng::seeded(202);
    let mut worst_linear = 0.0f64;
    for s in 0..50 {
        let (x, y, w) = random_set(&mut r, 20);
        let params = LinearParams { seed: s, ..LinearParams::new(1.0) };
        let model = train_linear(&x, &y, &w, params)?;
        let got = linear_primal_objective(&model.w, model.b, &x, &y, &w);
        let want = primal_oracle(&x, &y, &w);
        worst_linear = worst_linear.max((got - want).abs() / want.abs());
    }
    let mut worst_rbf = 0.0f64;
    for s in 0..10 {
        let (x, y, w) = random_set(&mut r, 10);
        let (c, gamma) = if s % 2 == 0 { (1.0, 1.0) } else { (10.0, 2.0) };
        let (_, alpha) = train_rbf_with_dual(&x, &y, &w, RbfParams::new(c, gamma))?;
        let got = rbf_dual_objective(&alpha, &x, &y, gamma);
        let u: Vec<f64> = w.iter().map(|wi| c * wi).collect();
        let want = dual_oracle(&x, &y, &u, gamma);
        worst_rbf = worst_rbf.max((got - want).abs());
    }
    let elapsed = start.elapsed();
    Ok(pass_if(
        worst_linear <= 1e-6 && worst_rbf <= 1e-4 && elapsed < Duration::from_secs(30),
        format!(
            "linear primal max rel. Δ = {worst_linear:.2e} (≤ 1e-6, 50 sets); RBF dual max Δ = {worst_rbf:.2e} (≤ 1e-4, 10 sets); {elapsed:.2?} (< 30 s)"
        ),
    ))
}

// ----------------------------------------------------------- 3: whitening

/// Largest deviation of the sample covariance (normalized by N) from I, and
/// of the mean from 0.
fn whiteness(rows: &[BlockVector]) -> Result<(f64, f64, usize)> {
    let w = fit_whitener(rows, DEFAULT_RELATIVE_EPSILON)?;
    let z = w.apply_batch(rows)?;
    let n = z.len() as f64;
    let r = z[0].len();
    let mut cov_dev = 0.0f64;
    let mut mean_dev = 0.0f64;
    for a in 0..r {
        mean_dev = mean_dev.max((z.iter().map(|v| v[a]).sum::<f64>() / n).abs());
        for b in 0..r {
            let cov = z.iter().map(|v| v[a] * v[b]).sum::<f64>() / n;
            let target = if a == b { 1.0 } else { 0.0 };
            cov_dev = cov_dev.max((cov - target).abs());
        }
    }
    Ok((cov_dev, mean_dev, r))
}

fn random_rows(r: &mut Rng, n: usize, dim: usize, block: usize) -> Result<Vec<BlockVector>> {
    let mix: Vec<f64> = (0..dim).map(|_| uniform(r, 0.1, 3.0)).collect();
    (0..n)
        .map(|_| {
            let common = uniform(r, -1.0, 1.0);
            let v: Vec<f32> = mix
                .iter()
                .map(|m| (m * uniform(r, -1.0, 1.0) + common + 5.0) as f32)
                .collect();
            BlockVector::from_dense(&v, block)
        })
        .collect()
}

/// Pre-whitening encodings of `records` under `config`, with codebooks fitted
/// on descriptors of the first images.
fn encodings(records: &[CellRecord], source: &dyn ImageSource, config: &PipelineConfig) -> Result<Vec<BlockVector>> {
    use rayon::prelude::*;
    let descriptors: Vec<Descriptors> = records
        .par_iter()
        .map(|rec| Ok(extract_cell(&source.load(rec)?, config)?.descriptors))
        .collect::<Result<_>>()?;
    let m = config.encoder.m;
    let mut shards: Vec<Descriptors> = (0..m).map(|_| Descriptors::empty(descriptors[0].dim())).collect();
    let cap = config.encoder.codebook_sample;
    for (i, d) in descriptors.iter().enumerate() {
        let shard = &mut shards[i % m];
        if shard.rows() < cap {
            shard.extend(d);
        }
    }
    let codebooks = fit_codebooks(&shards, config.kmeans(), config.seeds.codebook)?;
    let encoder = VladEncoder::new(codebooks, config.encoder.rho)?;
    descriptors.iter().map(|d| Ok(encoder.prewhiten(d)?.vector)).collect()
}

fn criterion_whitening(scratch: &Path) -> Result<Outcome> {
    let mut r = rng::seeded(303);
    let mut cov = 0.0f64;
    let mut mean = 0.0f64;
    // N > D (full covariance) and N < D (Gram-side) regimes
    for (n, dim, block) in [(200, 24, 8), (40, 300, 30)] {
        let (c, m, _) = whiteness(&random_rows(&mut r, n, dim, block)?)?;
        cov = cov.max(c);
        mean = mean.max(m);
    }
    let dir = scratch.join("whitening");
    let records = write_synthetic_dataset(&dir, SyntheticSpec { cells: 48, side: 120, seed: 3 })?;
    let config = small_config();
    let source = Dataset::open(&dir)?.source();
    let (c, m, rank) = whiteness(&encodings(&records, &source, &config)?)?;
    cov = cov.max(c);
    mean = mean.max(m);
    let synthetic_ok = cov <= 1e-4 && mean <= 1e-9;
    let mut detail = format!(
        "synthetic: cov max |Δ| = {cov:.2e} (≤ 1e-4), mean max = {mean:.2e} (≤ 1e-9), incl. 48 rendered cells (rank {rank})"
    );
    let Some(real) = elpv_dir() else {
        detail.push_str(&format!("; real encodings: {NO_DATA}"));
        return Ok(Outcome {
            status: if synthetic_ok { Status::Blocked } else { Status::Fail },
            detail,
        });
    };
    let dataset = Dataset::open(&real)?;
    let config = PipelineConfig::default();
    let train = canonical_split(&dataset.records, &config)?.train;
    let records: Vec<CellRecord> = train.into_iter().map(|s| s.record).collect();
    let (c, m, rank) = whiteness(&encodings(&records, &dataset.source(), &config)?)?;
    detail.push_str(&format!("; real ({} cells, rank {rank}): cov {c:.2e}, mean {m:.2e}", records.len()));
    Ok(pass_if(synthetic_ok && c <= 1e-4 && m <= 1e-9, detail))
}

// -------------------------------------------------------------- 4: metrics

fn criterion_metrics() -> Result<Outcome> {
    let mut notes = Vec::new();
    let mut ok = true;

    let truth = [Label::Functional, Label::Functional, Label::Defective, Label::Defective, Label::Defective];
    let ordered = [-2.0, -1.0, 0.5, 1.0, 3.0];
    let reversed: Vec<f64> = ordered.iter().map(|s| -s).collect();
    let (_, a1) = roc_auc(&ordered, &truth)?;
    let (_, a0) = roc_auc(&reversed, &truth)?;
    ok &= a1 == 1.0 && a0 == 0.0;
    notes.push(format!("ordered/reversed AUC = {a1}/{a0}"));

    let mut r = rng::seeded(404);
    let scores: Vec<f64> = (0..1000).map(|_| uniform(&mut r, -1.0, 1.0)).collect();
    let labels: Vec<Label> = (0..1000)
        .map(|_| if rng::unit_f64(&mut r) < 0.5 { Label::Defective } else { Label::Functional })
        .collect();
    let (_, random_auc) = roc_auc(&scores, &labels)?;
    ok &= (0.45..=0.55).contains(&random_auc);
    notes.push(format!("random AUC = {random_auc:.4} ∈ [0.45, 0.55]"));

    let mut worst = 0.0f64;
    for transform in [|s: f64| s.exp(), |s: f64| 3.0 * s - 7.0, |s: f64| s.powi(3), |s: f64| s.atan()] {
        let t: Vec<f64> = scores.iter().map(|&s| transform(s)).collect();
        let (_, a) = roc_auc(&t, &labels)?;
        worst = worst.max((a - random_auc).abs());
    }
    ok &= worst <= 1e-12;
    notes.push(format!("monotone transforms |Δ| = {worst:.1e}"));

    // TP=40, FP=10, FN=20 (and TN=30) for the defective class
    let cm = ConfusionMatrix {
        counts: [[30, 10], [20, 40]],
    };
    let prf = precision_recall_f1(&cm)?;
    let d = prf.per_class[Label::Defective.index()];
    ok &= (d.precision - 0.8).abs() < 1e-15 && (d.recall - 2.0 / 3.0).abs() < 1e-15 && (d.f1 - 8.0 / 11.0).abs() < 1e-15;
    let perfect = precision_recall_f1(&ConfusionMatrix {
        counts: [[5, 0], [0, 7]],
    })?;
    ok &= perfect.macro_f1 == 1.0;
    let absent = precision_recall_f1(&ConfusionMatrix {
        counts: [[9, 0], [0, 0]],
    })?;
    ok &= absent.per_class[Label::Defective.index()].f1 == 0.0 && absent.absent[Label::Defective.index()];
    notes.push(format!("F1 cases: P={}, R={:.4}, F1={:.6} (8/11)", d.precision, d.recall, d.f1));
    Ok(pass_if(ok, notes.join("; ")))
}

// ------------------------------------------------------------- 5: dataset

fn canonical_split(records: &[CellRecord], config: &PipelineConfig) -> Result<Split> {
    let labeled: Vec<LabeledSample> = records.iter().cloned().map(to_labeled).collect();
    stratified_split(
        &labeled,
        SplitSpec {
            test_fraction: config.test_fraction,
            seed: config.seeds.split,
        },
    )
}

fn protocol(records: &[CellRecord]) -> Result<(bool, String)> {
    let split = canonical_split(records, &PipelineConfig::default())?;
    let cw = class_weights(&split.train)?;
    let c0n0 = cw.functional * cw.n_functional as f64;
    let c1n1 = cw.defective * cw.n_defective as f64;
    let ok = records.len() == 2624 && split.train.len() == 1968 && split.test.len() == 656 && c0n0 == 984.0 && c1n1 == 984.0;
    Ok((
        ok,
        format!(
            "{} records → {}/{}; c₀·n₀ = {c0n0}, c₁·n₁ = {c1n1}",
            records.len(),
            split.train.len(),
            split.test.len()
        ),
    ))
}

fn criterion_protocol() -> Result<Outcome> {
    let (syn_ok, syn) = protocol(&synthetic_records(2624, 0))?;
    let Some(real) = elpv_dir() else {
        return Ok(Outcome {
            status: if syn_ok { Status::Blocked } else { Status::Fail },
            detail: format!("synthetic index with published counts: {syn}; real index: {NO_DATA}"),
        });
    };
    let (real_ok, detail) = protocol(&Dataset::open(&real)?.records)?;
    Ok(pass_if(syn_ok && real_ok, format!("synthetic: {syn}; real: {detail}")))
}

// --------------------------------------------------------- 6–8: real data

fn criterion_result() -> Result<Outcome> {
    let Some(real) = elpv_dir() else { return Ok(blocked(NO_DATA)) };
    let start = Instant::now();
    let art = run_train(&PipelineConfig::default(), &real, &real_options())?;
    let g = art.report.group(Group::Combined).expect("combined group");
    let auc = g.auc.unwrap_or(f64::NAN);
    Ok(pass_if(
        g.prf.macro_f1 >= 0.72 && auc >= 0.78,
        format!(
            "dense SIFT 60×60, linear, weighted: macro-F1 {:.4} (≥ 0.72), AUC {auc:.4} (≥ 0.78), accuracy {:.4}, n={}, {:.1?}",
            g.prf.macro_f1,
            g.accuracy,
            g.n,
            start.elapsed()
        ),
    ))
}

fn criterion_trends() -> Result<Outcome> {
    let Some(real) = elpv_dir() else { return Ok(blocked(NO_DATA)) };
    let dataset = Dataset::open(&real)?;
    let n_values: Vec<usize> = (1..=15).map(|i| 5 * i).collect();
    let cells = run_grid_sweep(
        &PipelineConfig::default(),
        &n_values,
        &[true, false],
        &dataset.records,
        &dataset.source(),
        &real_options(),
    )?;
    let f1 = |n: usize, weighted: bool| {
        cells
            .iter()
            .find(|c| c.n == n && c.weighted == weighted)
            .and_then(|c| c.outcome.as_ref().ok())
            .map(|s| s.macro_f1)
    };
    let (f60, f5) = (f1(60, true), f1(5, true));
    let denser = matches!((f60, f5), (Some(a), Some(b)) if a > b);
    let wins = n_values
        .iter()
        .filter(|&&n| matches!((f1(n, true), f1(n, false)), (Some(w), Some(u)) if w > u))
        .count();
    Ok(pass_if(
        denser && 2 * wins > n_values.len(),
        format!(
            "macro-F1 n=60 {f60:?} > n=5 {f5:?}; weighting better at {wins}/{} grid sizes",
            n_values.len()
        ),
    ))
}

fn criterion_learning_curve() -> Result<Outcome> {
    let Some(real) = elpv_dir() else { return Ok(blocked(NO_DATA)) };
    let dataset = Dataset::open(&real)?;
    let config = PipelineConfig::default();
    let split = canonical_split(&dataset.records, &config)?;
    let curve = learning_curve(&config, &split, &[0.25, 0.5, 0.75], 10, &dataset.source(), &real_options())?;
    let medians: Vec<f64> = curve
        .summary
        .iter()
        .filter(|s| s.metric == "macro_f1")
        .map(|s| s.stats.median)
        .collect();
    let ok = medians.len() == 3 && medians.windows(2).all(|w| w[1] >= w[0]);
    Ok(pass_if(ok, format!("median macro-F1 at 25/50/75%: {medians:.4?} (nondecreasing), 10 repeats")))
}

// ------------------------------------------------------------ 9: runtime

fn criterion_runtime(scratch: &Path) -> Result<Outcome> {
    let budget = Duration::from_secs(120);
    let (dir, train, test, source_note) = match elpv_dir() {
        Some(real) => {
            let dataset = Dataset::open(&real)?;
            let split = canonical_split(&dataset.records, &PipelineConfig::default())?;
            (real, split.train, split.test, "real test split".to_owned())
        }
        None => {
            // Same cell size as the public dataset; the encoder is trained on
            // a subset since only inference is timed.
            let dir = scratch.join("runtime");
            let records = write_synthetic_dataset(&dir, SyntheticSpec { cells: 856, side: 300, seed: 9 })?;
            let labeled: Vec<LabeledSample> = records.into_iter().map(to_labeled).collect();
            let (train, test) = labeled.split_at(200);
            (dir, train.to_vec(), test.to_vec(), format!("synthetic 300×300 cells ({NO_DATA})"))
        }
    };
    let mut config = PipelineConfig::default();
    config.set("grid_c", "1")?;
    let source = Dataset::open(&dir)?.source();
    let fitted = fit_classifier(&config, &train, &source, None)?;

    // Reload the persisted model so scoring uses the stored containers.
    let run = scratch.join("runtime-model");
    fitted.classifier.save(&run)?;
    let classifier = Classifier::load(&run)?;
    let paths: Vec<PathBuf> = test.iter().map(|s| dir.join(&s.record.image_path)).collect();
    let start = Instant::now();
    let scored = run_predict(&classifier, &paths);
    let elapsed = start.elapsed();
    let failures = scored.iter().filter(|p| p.is_err()).count();
    let threads = rayon::current_num_threads();
    Ok(pass_if(
        paths.len() == 656 && failures == 0 && elapsed <= budget,
        format!(
            "{} cells, dense SIFT 60×60, K=32, m=5 (dim {}): {elapsed:.2?} (≤ 120 s) on {threads} thread(s); {source_note}",
            paths.len(),
            classifier.encoder.output_dim().unwrap_or(0)
        ),
    ))
}

// -------------------------------------------------------- 10: determinism

fn small_config() -> PipelineConfig {
    PipelineConfig::from_key_values(
        "sampling = dense:12\n\
         K = 8\n\
         m = 2\n\
         codebook_sample = 4000\n\
         kmeans_batch = 256\n\
         kmeans_iterations = 30\n\
         grid_c = 0.1,1,10\n\
         folds = 3\n",
    )
    .expect("valid configuration")
}

fn criterion_determinism(scratch: &Path) -> Result<Outcome> {
    let dir = scratch.join("determinism");
    write_synthetic_dataset(&dir, SyntheticSpec { cells: 120, side: 160, seed: 10 })?;
    let mut config = small_config();
    config.set("seed_split", "7")?;
    config.set("seed_codebook", "8")?;
    config.set("seed_cv", "9")?;
    let runs: Vec<PathBuf> = ["a", "b"]
        .iter()
        .map(|tag| {
            let out = scratch.join(format!("determinism-run-{tag}"));
            run_train(&config, &dir, &RunOptions::default())?.save(&out)?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let read = |p: PathBuf| std::fs::read(&p).map_err(|e| elpv_core::Error::io(p, e));
    let same = |f: &str| -> Result<bool> { Ok(read(runs[0].join(f))? == read(runs[1].join(f))?) };
    let metrics = same("metrics.csv")?;
    let model = same(MODEL_FILE)?;
    let encoder = same("encoder.bin")?;
    Ok(pass_if(
        metrics && model && encoder,
        format!("two runs on 120 synthetic cells: metrics.csv identical={metrics}, model identical={model}, encoder identical={encoder}"),
    ))
}

fn main() {
    let scratch = tempfile::tempdir().expect("scratch directory");
    let scratch = scratch.path();
    type Criterion<'a> = Box<dyn Fn() -> Result<Outcome> + 'a>;
    let criteria: Vec<(&str, Criterion)> = vec![
        ("VLAD oracle equivalence", Box::new(criterion_vlad)),
        ("SVM oracle equivalence", Box::new(criterion_svm)),
        ("whitening", Box::new(|| criterion_whitening(scratch))),
        ("metric correctness", Box::new(criterion_metrics)),
        ("dataset protocol", Box::new(criterion_protocol)),
        ("desk-scale result", Box::new(criterion_result)),
        ("grid and weighting trends", Box::new(criterion_trends)),
        ("learning curve", Box::new(criterion_learning_curve)),
        ("inference runtime", Box::new(|| criterion_runtime(scratch))),
        ("determinism", Box::new(|| criterion_determinism(scratch))),
    ];
    let require = std::env::var("ELPV_REQUIRE").is_ok_and(|v| v == "1");
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = run().unwrap_or_else(|e| Outcome {
            status: Status::Fail,
            detail: format!("error: {e}"),
        });
        println!("criterion {:>2} {:<26} {} — {}", i + 1, name, outcome.status, outcome.detail);
        if outcome.status == Status::Fail || (outcome.status == Status::Blocked && require) {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criterion/criteria not met");
        std::process::exit(1);
    }
}
