//! Run directory layout:
//!
//! ```text
//! run-manifest.txt   digest, every config key, best parameters, fallbacks
//! split.csv          train/test manifest
//! encoder.bin        VLAD encoder container
//! model.bin          SVM container with the cross-validation table
//! metrics.csv        grouped test metrics
//! roc_<group>.csv    ROC points per group
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::container::Container;
use crate::dataset::{load_split_manifest, save_split_manifest};
use crate::encoding::VladEncoder;
use crate::error::{Error, Result, Stage, StageExt};
use crate::eval::{write_metrics_csv, write_roc_csv, EvalReport};
use crate::svm::SvmModel;

use super::{evaluate_classifier, Classifier, FeatureCache, ImageSource, PipelineConfig, RunArtifact, SweepCell};

pub const MANIFEST_FILE: &str = "run-manifest.txt";
pub const SPLIT_FILE: &str = "split.csv";
pub const ENCODER_FILE: &str = "encoder.bin";
pub const MODEL_FILE: &str = "model.bin";
pub const METRICS_FILE: &str = "metrics.csv";

const MANIFEST_HEADER: &str = "# elpv run manifest";

pub fn metrics_csv(report: &EvalReport) -> Vec<u8> {
    let mut out = Vec::new();
    write_metrics_csv(&mut out, report).expect("writing to memory");
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn manifest_text(classifier: &Classifier, split_sizes: (usize, usize), fallback: &[String], notes: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MANIFEST_HEADER}");
    let _ = writeln!(out, "digest = {}", classifier.digest);
    out.push_str(&classifier.config.canonical_text());
    let _ = writeln!(out, "best_c = {}", classifier.model.c());
    if let SvmModel::Rbf(m) = &classifier.model {
        let _ = writeln!(out, "best_gamma = {}", m.gamma);
    }
    let _ = writeln!(out, "train = {}", split_sizes.0);
    let _ = writeln!(out, "test = {}", split_sizes.1);
    for f in fallback {
        let _ = writeln!(out, "fallback = {f}");
    }
    for n in notes {
        let _ = writeln!(out, "note = {}", n.replace('\n', " "));
    }
    out
}

struct Manifest {
    config: PipelineConfig,
    digest: String,
    fallback: Vec<String>,
    notes: Vec<String>,
}

fn parse_manifest(text: &str) -> Result<Manifest> {
    let mut config = PipelineConfig::default();
    let mut digest = None;
    let mut fallback = Vec::new();
    let mut notes = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Container(format!("run manifest line `{line}` is not `key = value`")))?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "digest" => digest = Some(v.to_owned()),
            "fallback" => fallback.push(v.to_owned()),
            "note" => notes.push(v.to_owned()),
            "best_c" | "best_gamma" | "train" | "test" => {}
            _ => config.set(k, v).map_err(|e| Error::Container(format!("run manifest: {e}")))?,
        }
    }
    let digest = digest.ok_or_else(|| Error::Container("run manifest has no digest".into()))?;
    if digest != config.digest() {
        return Err(Error::Container(format!(
            "run manifest digest {digest} does not match its configuration ({})",
            config.digest()
        )));
    }
    Ok(Manifest {
        config,
        digest,
        fallback,
        notes,
    })
}

impl Classifier {
    /// Writes the manifest, encoder and model.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.save_with(dir, (0, 0), &[], &[])
    }

    fn save_with(&self, dir: &Path, sizes: (usize, usize), fallback: &[String], notes: &[String]) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join(MANIFEST_FILE), manifest_text(self, sizes, fallback, notes).as_bytes())?;
        self.encoder.to_container()?.save(&dir.join(ENCODER_FILE))?;
        self.model.to_container(&self.cv_table).save(&dir.join(MODEL_FILE))
    }

    /// Reads what [`save`](Self::save) wrote; the configuration digest
    /// must match the manifest.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = parse_manifest(&read_text(&dir.join(MANIFEST_FILE))?)?;
        let encoder = VladEncoder::from_container(&Container::load(&dir.join(ENCODER_FILE))?)?;
        let (model, cv_table) = SvmModel::from_container(&Container::load(&dir.join(MODEL_FILE))?)?;
        if encoder.descriptor_dim() != manifest.config.descriptor.dim() {
            return Err(Error::Container("encoder descriptor dimension does not match the config".into()));
        }
        Ok(Self {
            config: manifest.config,
            digest: manifest.digest,
            encoder,
            model,
            cv_table,
        })
    }
}

impl RunArtifact {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let persist = || -> Result<()> {
            let sizes = (self.split.train.len(), self.split.test.len());
            self.classifier.save_with(dir, sizes, &self.fallback_images, &self.notes)?;
            save_split_manifest(&dir.join(SPLIT_FILE), &self.split)?;
            write_file(&dir.join(METRICS_FILE), &metrics_csv(&self.report))?;
            for g in &self.report.groups {
                if let Some(roc) = &g.roc {
                    let path = dir.join(format!("roc_{}.csv", g.group));
                    let mut out = Vec::new();
                    write_roc_csv(&mut out, roc).expect("writing to memory");
                    write_file(&path, &out)?;
                }
            }
            Ok(())
        };
        persist().stage(Stage::Persist)
    }

    /// Loads a saved run and re-evaluates its test split through `source`.
    pub fn load(dir: &Path, source: &dyn ImageSource, cache: Option<&FeatureCache>) -> Result<Self> {
        let classifier = Classifier::load(dir).stage(Stage::Load)?;
        let split = load_split_manifest(&dir.join(SPLIT_FILE)).stage(Stage::Load)?;
        let manifest = parse_manifest(&read_text(&dir.join(MANIFEST_FILE))?)?;
        let (mut report, _) = evaluate_classifier(&classifier, &split.test, source, cache)?;
        report.warnings.extend(manifest.notes.iter().cloned());
        Ok(Self {
            classifier,
            split,
            report,
            fallback_images: manifest.fallback,
            notes: manifest.notes,
        })
    }
}

/// The `metrics.csv` bytes stored in a run directory.
pub fn load_stored_metrics(dir: &Path) -> Result<Vec<u8>> {
    let path = dir.join(METRICS_FILE);
    std::fs::read(&path).map_err(|e| Error::io(path, e))
}

/// `n,weighted,macro_f1,auc,accuracy,error`; failed cells carry the
/// error and empty metric columns.
pub fn write_sweep_csv<W: std::io::Write>(out: &mut W, cells: &[SweepCell]) -> std::io::Result<()> {
    writeln!(out, "n,weighted,macro_f1,auc,accuracy,error")?;
    for c in cells {
        match &c.outcome {
            Ok(s) => writeln!(
                out,
                "{},{},{},{},{},",
                c.n,
                c.weighted,
                s.macro_f1,
                s.auc.map_or(String::new(), |a| a.to_string()),
                s.accuracy
            )?,
            Err(e) => writeln!(out, "{},{},,,,\"{}\"", c.n, c.weighted, e.to_string().replace('"', "'"))?,
        }
    }
    Ok(())
}
