//! End-to-end training, evaluation and prediction.
//!
//! Stage order inside [`run_train_with`]: config validation → split →
//! training-image descriptors for the codebook shards → codebooks →
//! training encodings → whitening → grid search → final fit → test-set
//! evaluation. Test images are loaded only in the last stage.

mod artifact;
mod config;
mod plot;
mod source;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::dataset::{
    class_weights, stratified_split, stratified_subsample, to_labeled, CellRecord, Label, LabeledSample, Split,
    SplitSpec,
};
use crate::encoding::{fit_codebooks, VladEncoder};
use crate::error::{Error, Result, Stage, StageExt};
use crate::eval::{boxplot, evaluate_scores, BoxStats, CurvePoint, EvalReport, Group};
use crate::features::{DenseGridSpec, DescriptorKind, Descriptors, Sampling};
use crate::imaging::{load_image, GrayImage};
use crate::rng;
use crate::svm::{grid_search, train, Candidate, CvRow, SvmModel};

pub use artifact::{
    load_stored_metrics, metrics_csv, write_sweep_csv, ENCODER_FILE, MANIFEST_FILE, METRICS_FILE, MODEL_FILE,
    SPLIT_FILE,
};
pub use config::{PipelineConfig, Seeds, CONFIG_KEYS};
pub use plot::{boxplot_svg, read_learning_curve_csv, read_roc_csv, roc_svg};
pub use source::{extract_cell, CellFeatures, Dataset, DirSource, FeatureCache, ImageSource, INDEX_FILE};

use source::cell_features;

const SHARD_STREAM: u64 = 1 << 32;
const IMAGE_STREAM: u64 = 1 << 33;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Directory for cached descriptors; none disables caching.
    pub cache_dir: Option<PathBuf>,
}

impl RunOptions {
    fn cache(&self) -> Result<Option<FeatureCache>> {
        self.cache_dir.as_deref().map(FeatureCache::new).transpose()
    }
}

/// A fitted encoder and SVM together with the configuration that
/// produced them.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub config: PipelineConfig,
    pub digest: String,
    pub encoder: VladEncoder,
    pub model: SvmModel,
    pub cv_table: Vec<CvRow>,
}

impl Classifier {
    pub fn score_descriptors(&self, d: &Descriptors) -> Result<f64> {
        let g = self.encoder.encode(d)?;
        self.model.decision_value(&g.values)
    }

    pub fn score_image(&self, img: &GrayImage) -> Result<Prediction> {
        let f = extract_cell(img, &self.config)?;
        let score = self.score_descriptors(&f.descriptors)?;
        Ok(Prediction {
            score,
            label: Label::from_score(score),
            fallback: f.fallback,
        })
    }
}

/// Decision value and hard label (`score > 0` is defective).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub score: f64,
    pub label: Label,
    pub fallback: bool,
}

/// Result of fitting on a training set.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub classifier: Classifier,
    pub best: Candidate,
    /// Training images described with the fallback dense grid.
    pub fallback_images: Vec<String>,
    pub warnings: Vec<String>,
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub classifier: Classifier,
    pub split: Split,
    pub report: EvalReport,
    /// Images (train and test) described with the fallback dense grid.
    pub fallback_images: Vec<String>,
    /// Training-time warnings; the report's warnings end with these.
    pub notes: Vec<String>,
}

impl RunArtifact {
    pub fn digest(&self) -> &str {
        &self.classifier.digest
    }
}

/// Up to `q` distinct indices of `0..n`, ascending.
fn sample_indices(n: usize, q: usize, rng: &mut rng::Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let q = q.min(n);
    for i in 0..q {
        let j = i + rng::index(rng, n - i);
        idx.swap(i, j);
    }
    idx.truncate(q);
    idx.sort_unstable();
    idx
}

/// Descriptor samples for the `m` codebooks. Training images are dealt
/// into `m` disjoint random shards; each image contributes an equal
/// random share of its descriptors to its shard's sample.
fn codebook_shards(
    config: &PipelineConfig,
    train: &[LabeledSample],
    source: &dyn ImageSource,
    cache: Option<&FeatureCache>,
) -> Result<(Vec<Descriptors>, Vec<bool>)> {
    let m = config.encoder.m;
    let n = train.len();
    if n < m {
        return Err(Error::data(format!("{n} training images cannot fill {m} codebook shards")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::stream(config.seeds.codebook, SHARD_STREAM), &mut order);
    let mut shard_of = vec![0; n];
    let mut sizes = vec![0usize; m];
    for (pos, &i) in order.iter().enumerate() {
        shard_of[i] = pos % m;
        sizes[pos % m] += 1;
    }
    let cap = config.encoder.codebook_sample;
    let per_image: Vec<(Descriptors, bool)> = train
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let f = cell_features(source, &s.record, config, cache)?;
            let quota = cap.div_ceil(sizes[shard_of[i]]);
            let rows = f.descriptors.rows();
            let picked = if rows <= quota {
                f.descriptors
            } else {
                let mut r = rng::stream(config.seeds.codebook, IMAGE_STREAM + i as u64);
                f.descriptors.select(&sample_indices(rows, quota, &mut r))
            };
            Ok((picked, f.fallback))
        })
        .collect::<Result<_>>()?;
    let dim = config.descriptor.dim();
    let mut shards = vec![Descriptors::empty(dim); m];
    for (i, (d, _)) in per_image.iter().enumerate() {
        shards[shard_of[i]].extend(d);
    }
    for (j, shard) in shards.iter_mut().enumerate() {
        if shard.rows() > cap {
            let mut r = rng::stream(config.seeds.codebook, SHARD_STREAM + 1 + j as u64);
            *shard = shard.select(&sample_indices(shard.rows(), cap, &mut r));
        }
    }
    Ok((shards, per_image.into_iter().map(|(_, f)| f).collect()))
}

/// Per-sample SVM weights: class weight, times the label-confidence
/// weight when sample weighting is on.
pub fn training_weights(config: &PipelineConfig, train: &[LabeledSample]) -> Result<Vec<f64>> {
    let cw = class_weights(train)?;
    Ok(train
        .iter()
        .map(|s| cw.of(s.label) * if config.use_sample_weights { s.weight } else { 1.0 })
        .collect())
}

/// Weights for the cross-validation F1.
pub fn selection_weights(config: &PipelineConfig, train: &[LabeledSample]) -> Vec<f64> {
    let weighted = config.use_sample_weights && config.weighted_selection;
    train.iter().map(|s| if weighted { s.weight } else { 1.0 }).collect()
}

/// Fits codebooks, whitening and the SVM on `train`. Reads only the
/// training images.
pub fn fit_classifier(
    config: &PipelineConfig,
    train: &[LabeledSample],
    source: &dyn ImageSource,
    cache: Option<&FeatureCache>,
) -> Result<Fitted> {
    config.validate().stage(Stage::Config)?;
    let digest = config.digest();
    let mut warnings = Vec::new();

    source.enter(Stage::Extract);
    let (shards, fallback) = codebook_shards(config, train, source, cache).stage(Stage::Extract)?;
    let fallback_images: Vec<String> = train
        .iter()
        .zip(&fallback)
        .filter(|(_, &f)| f)
        .map(|(s, _)| s.record.image_path.clone())
        .collect();

    source.enter(Stage::Codebook);
    let codebooks = fit_codebooks(&shards, config.kmeans(), config.seeds.codebook).stage(Stage::Codebook)?;
    drop(shards);
    let mut encoder = VladEncoder::new(codebooks, config.encoder.rho).stage(Stage::Codebook)?;

    source.enter(Stage::Encode);
    let pre = train
        .par_iter()
        .map(|s| {
            let f = cell_features(source, &s.record, config, cache)?;
            encoder.prewhiten(&f.descriptors)
        })
        .collect::<Result<Vec<_>>>()
        .stage(Stage::Encode)?;
    let zero = pre.iter().filter(|p| p.zero_codebooks > 0).count();
    if zero > 0 {
        warnings.push(format!("{zero} training images had an all-zero VLAD vector for some codebook"));
    }

    source.enter(Stage::Whiten);
    let vectors: Vec<_> = pre.into_iter().map(|p| p.vector).collect();
    encoder
        .fit_whitening(&vectors, config.encoder.whitening_epsilon)
        .stage(Stage::Whiten)?;
    let encoder = encoder.quantized().stage(Stage::Whiten)?;
    let encoded = encoder.whiten_batch(&vectors).stage(Stage::Whiten)?;
    drop(vectors);
    let degenerate = encoded.iter().filter(|g| g.degenerate).count();
    if degenerate > 0 {
        warnings.push(format!("{degenerate} training encodings whitened to zero"));
    }
    let x: Vec<Vec<f64>> = encoded.into_iter().map(|g| g.values).collect();
    let y: Vec<f64> = train.iter().map(|s| s.label.sign()).collect();

    source.enter(Stage::GridSearch);
    let weights = training_weights(config, train).stage(Stage::GridSearch)?;
    let scoring = selection_weights(config, train);
    let grid = grid_search(&x, &y, &weights, &scoring, &config.grid_spec()).stage(Stage::GridSearch)?;

    source.enter(Stage::Fit);
    let model = train_model(config, &x, &y, &weights, grid.best).stage(Stage::Fit)?;

    Ok(Fitted {
        classifier: Classifier {
            config: config.clone(),
            digest,
            encoder,
            model,
            cv_table: grid.table,
        },
        best: grid.best,
        fallback_images,
        warnings,
    })
}

fn train_model(config: &PipelineConfig, x: &[Vec<f64>], y: &[f64], w: &[f64], best: Candidate) -> Result<SvmModel> {
    train(x, y, w, config.kernel, best, config.seeds.cv)?.quantized()
}

/// Scores `test` and computes the grouped report. Reads test images only.
pub fn evaluate_classifier(
    classifier: &Classifier,
    test: &[LabeledSample],
    source: &dyn ImageSource,
    cache: Option<&FeatureCache>,
) -> Result<(EvalReport, Vec<String>)> {
    source.enter(Stage::Evaluate);
    let scored = test
        .par_iter()
        .map(|s| {
            let f = cell_features(source, &s.record, &classifier.config, cache)?;
            Ok((classifier.score_descriptors(&f.descriptors)?, f.fallback))
        })
        .collect::<Result<Vec<(f64, bool)>>>()
        .stage(Stage::Evaluate)?;
    let scores: Vec<f64> = scored.iter().map(|s| s.0).collect();
    let fallback = test
        .iter()
        .zip(&scored)
        .filter(|(_, s)| s.1)
        .map(|(t, _)| t.record.image_path.clone())
        .collect();
    let report = evaluate_scores(&scores, test, &classifier.digest).stage(Stage::Evaluate)?;
    Ok((report, fallback))
}

/// Full run on the records of an already-loaded index.
pub fn run_train_with(
    config: &PipelineConfig,
    records: &[CellRecord],
    source: &dyn ImageSource,
    options: &RunOptions,
) -> Result<RunArtifact> {
    source.enter(Stage::Config);
    config.validate().stage(Stage::Config)?;
    let cache = options.cache().stage(Stage::Config)?;

    source.enter(Stage::Split);
    let labeled: Vec<LabeledSample> = records.iter().cloned().map(to_labeled).collect();
    let split = stratified_split(
        &labeled,
        SplitSpec {
            test_fraction: config.test_fraction,
            seed: config.seeds.split,
        },
    )
    .stage(Stage::Split)?;

    let fitted = fit_classifier(config, &split.train, source, cache.as_ref())?;
    let (mut report, test_fallback) = evaluate_classifier(&fitted.classifier, &split.test, source, cache.as_ref())?;
    let mut notes = fitted.warnings;
    let mut fallback_images = fitted.fallback_images;
    fallback_images.extend(test_fallback);
    if !fallback_images.is_empty() {
        notes.push(format!(
            "{} images had no corners and used the {}×{} fallback grid",
            fallback_images.len(),
            config.corner_fallback_grid,
            config.corner_fallback_grid
        ));
    }
    report.warnings.extend(notes.iter().cloned());
    Ok(RunArtifact {
        classifier: fitted.classifier,
        split,
        report,
        fallback_images,
        notes,
    })
}

/// Loads `dataset_dir/labels.csv` and trains on its images.
pub fn run_train(config: &PipelineConfig, dataset_dir: &Path, options: &RunOptions) -> Result<RunArtifact> {
    config.validate().stage(Stage::Config)?;
    let dataset = Dataset::open(dataset_dir).stage(Stage::Load)?;
    run_train_with(config, &dataset.records, &dataset.source(), options)
}

/// Scores image files. Each image succeeds or fails on its own.
pub fn run_predict(classifier: &Classifier, image_paths: &[PathBuf]) -> Vec<Result<Prediction>> {
    image_paths
        .par_iter()
        .map(|p| classifier.score_image(&load_image(p)?))
        .collect()
}

/// Combined-group metrics of one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepScores {
    pub macro_f1: f64,
    pub auc: Option<f64>,
    pub accuracy: f64,
}

#[derive(Debug)]
pub struct SweepCell {
    pub n: usize,
    pub weighted: bool,
    pub outcome: Result<SweepScores>,
}

fn combined(report: &EvalReport) -> Result<SweepScores> {
    let g = report
        .group(Group::Combined)
        .ok_or_else(|| Error::data("report has no combined group"))?;
    Ok(SweepScores {
        macro_f1: g.prf.macro_f1,
        auc: g.auc,
        accuracy: g.accuracy,
    })
}

/// One full train/evaluate run per (dense grid size, weighting flag), all
/// on the same split. Failing cells keep their error and the rest of the
/// table is still produced.
pub fn run_grid_sweep(
    template: &PipelineConfig,
    n_values: &[usize],
    weightings: &[bool],
    records: &[CellRecord],
    source: &dyn ImageSource,
    options: &RunOptions,
) -> Result<Vec<SweepCell>> {
    if template.descriptor != DescriptorKind::Sift {
        return Err(Error::invalid("the grid sweep varies dense SIFT sampling"));
    }
    if n_values.is_empty() || weightings.is_empty() {
        return Err(Error::invalid("the sweep needs at least one grid size and one weighting"));
    }
    let mut base = template.clone();
    base.sampling = Sampling::Dense(DenseGridSpec::new(n_values[0]));
    base.validate().stage(Stage::Config)?;
    let cache = options.cache().stage(Stage::Config)?;
    let labeled: Vec<LabeledSample> = records.iter().cloned().map(to_labeled).collect();
    let split = stratified_split(
        &labeled,
        SplitSpec {
            test_fraction: template.test_fraction,
            seed: template.seeds.split,
        },
    )
    .stage(Stage::Split)?;
    let cells: Vec<(usize, bool)> = n_values
        .iter()
        .flat_map(|&n| weightings.iter().map(move |&w| (n, w)))
        .collect();
    Ok(cells
        .par_iter()
        .map(|&(n, weighted)| {
            let mut cfg = template.clone();
            cfg.sampling = Sampling::Dense(DenseGridSpec::new(n));
            cfg.use_sample_weights = weighted;
            let outcome = fit_classifier(&cfg, &split.train, source, cache.as_ref())
                .and_then(|f| evaluate_classifier(&f.classifier, &split.test, source, cache.as_ref()))
                .and_then(|(report, _)| combined(&report));
            SweepCell { n, weighted, outcome }
        })
        .collect())
}

/// Per-fraction boxplot summary of one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSummary {
    pub fraction: f64,
    pub metric: String,
    pub stats: BoxStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
    pub summary: Vec<CurveSummary>,
}

pub const CURVE_METRICS: [&str; 3] = ["macro_f1", "auc", "accuracy"];

/// Boxplot statistics per (fraction, metric), in order of first
/// appearance.
pub fn summarize_curve(points: &[CurvePoint]) -> Result<Vec<CurveSummary>> {
    let mut keys: Vec<(f64, &str)> = Vec::new();
    for p in points {
        if !keys.iter().any(|&(f, m)| f == p.fraction && m == p.metric) {
            keys.push((p.fraction, &p.metric));
        }
    }
    keys.into_iter()
        .map(|(fraction, metric)| {
            let values: Vec<f64> = points
                .iter()
                .filter(|p| p.fraction == fraction && p.metric == metric)
                .map(|p| p.value)
                .collect();
            Ok(CurveSummary {
                fraction,
                metric: metric.to_owned(),
                stats: boxplot(&values)?,
            })
        })
        .collect()
}

/// For every fraction and repeat `r`: stratified subsample of the
/// training set, full refit with all seeds shifted by `r`, evaluation on
/// the fixed test set.
pub fn learning_curve(
    config: &PipelineConfig,
    split: &Split,
    fractions: &[f64],
    repeats: usize,
    source: &dyn ImageSource,
    options: &RunOptions,
) -> Result<LearningCurve> {
    if repeats == 0 {
        return Err(Error::invalid("learning curve needs at least one repeat"));
    }
    if fractions.is_empty() || fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
        return Err(Error::invalid("learning-curve fractions must lie in (0, 1]"));
    }
    config.validate().stage(Stage::Config)?;
    let cache = options.cache().stage(Stage::Config)?;
    let jobs: Vec<(f64, usize)> = fractions
        .iter()
        .flat_map(|&f| (0..repeats).map(move |r| (f, r)))
        .collect();
    let runs: Vec<(f64, usize, SweepScores)> = jobs
        .par_iter()
        .map(|&(fraction, r)| {
            let mut cfg = config.clone();
            cfg.seeds = config.seeds.offset(r as u64);
            let subset = stratified_subsample(&split.train, fraction, cfg.seeds.split).stage(Stage::Split)?;
            let fitted = fit_classifier(&cfg, &subset, source, cache.as_ref())?;
            let (report, _) = evaluate_classifier(&fitted.classifier, &split.test, source, cache.as_ref())?;
            Ok((fraction, r, combined(&report)?))
        })
        .collect::<Result<_>>()?;
    let mut points = Vec::new();
    for (fraction, repeat, s) in runs {
        for (metric, value) in [("macro_f1", Some(s.macro_f1)), ("auc", s.auc), ("accuracy", Some(s.accuracy))] {
            if let Some(value) = value {
                points.push(CurvePoint {
                    fraction,
                    repeat,
                    metric: metric.to_owned(),
                    value,
                });
            }
        }
    }
    let summary = summarize_curve(&points)?;
    Ok(LearningCurve { points, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_indices_are_distinct_sorted_and_seeded() {
        let a = sample_indices(100, 10, &mut rng::seeded(1));
        assert_eq!(a.len(), 10);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a, sample_indices(100, 10, &mut rng::seeded(1)));
        assert_eq!(sample_indices(5, 10, &mut rng::seeded(1)), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn summaries_group_by_fraction_and_metric() {
        let pts: Vec<CurvePoint> = [(0.5, 0.6), (0.5, 0.8), (1.0, 0.9)]
            .iter()
            .enumerate()
            .map(|(i, &(fraction, value))| CurvePoint {
                fraction,
                repeat: i,
                metric: "macro_f1".into(),
                value,
            })
            .collect();
        let s = summarize_curve(&pts).unwrap();
        assert_eq!(s.len(), 2);
        assert!((s[0].stats.median - 0.7).abs() < 1e-15);
        assert_eq!(s[1].stats.median, 0.9);
    }
}
