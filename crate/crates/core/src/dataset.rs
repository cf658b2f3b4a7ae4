//! Cell index ingestion, label mapping, stratified splitting and class weights.
//!
//! The index format is the one shipped with the public ELPV dataset
//! (`labels.csv`): one cell per line, `path probability wafer`, separated by
//! whitespace or commas. Lines starting with `#` are comments.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng;

/// Expert-assigned defect probability. Only four levels exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DefectProbability {
    Zero,
    OneThird,
    TwoThirds,
    One,
}

impl DefectProbability {
    pub const ALL: [DefectProbability; 4] = [
        DefectProbability::Zero,
        DefectProbability::OneThird,
        DefectProbability::TwoThirds,
        DefectProbability::One,
    ];

    pub fn value(self) -> f64 {
        match self {
            DefectProbability::Zero => 0.0,
            DefectProbability::OneThird => 1.0 / 3.0,
            DefectProbability::TwoThirds => 2.0 / 3.0,
            DefectProbability::One => 1.0,
        }
    }

    /// Snaps a parsed probability onto the nearest legal level when it lies
    /// within 1e-3 of it.
    pub fn from_value(p: f64) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|level| (level.value() - p).abs() <= 1e-3)
    }
}

impl fmt::Display for DefectProbability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Wafer {
    Mono,
    Poly,
}

impl Wafer {
    pub fn as_str(self) -> &'static str {
        match self {
            Wafer::Mono => "mono",
            Wafer::Poly => "poly",
        }
    }
}

impl fmt::Display for Wafer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Wafer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mono" | "monocrystalline" => Ok(Wafer::Mono),
            "poly" | "polycrystalline" => Ok(Wafer::Poly),
            _ => Err(Error::data(format!("unknown wafer type `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellRecord {
    /// Image path relative to the dataset root.
    pub image_path: String,
    pub probability: DefectProbability,
    pub wafer: Wafer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Functional = 0,
    Defective = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    /// SVM target: defective is the positive class.
    pub fn sign(self) -> f64 {
        match self {
            Label::Functional => -1.0,
            Label::Defective => 1.0,
        }
    }

    pub fn from_score(score: f64) -> Label {
        if score > 0.0 {
            Label::Defective
        } else {
            Label::Functional
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub record: CellRecord,
    pub label: Label,
    /// Rater-confidence weight.
    pub weight: f64,
}

impl LabeledSample {
    fn stratum(&self) -> (Wafer, DefectProbability) {
        (self.record.wafer, self.record.probability)
    }
}

/// Binary label and confidence weight for a record.
///
/// Non-confident assessments are all labeled defective; a non-confident
/// "functional" verdict keeps weight 0.33 and a non-confident "defective"
/// verdict 0.67.
pub fn to_labeled(record: CellRecord) -> LabeledSample {
    let (label, weight) = match record.probability {
        DefectProbability::Zero => (Label::Functional, 1.0),
        DefectProbability::OneThird => (Label::Defective, 0.33),
        DefectProbability::TwoThirds => (Label::Defective, 0.67),
        DefectProbability::One => (Label::Defective, 1.0),
    };
    LabeledSample {
        record,
        label,
        weight,
    }
}

fn parse_fields(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Parses index text; `origin` is only used in error messages.
pub fn parse_index(text: &str, origin: &Path) -> Result<Vec<CellRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Index {
            path: origin.to_path_buf(),
            line: line_no,
            message,
        };
        let fields = parse_fields(line);
        if fields.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", fields.len())));
        }
        let path = fields[0];
        if path.is_empty() {
            return Err(err("empty image path".into()));
        }
        let p: f64 = fields[1]
            .parse()
            .map_err(|_| err(format!("cannot parse probability `{}`", fields[1])))?;
        let probability = DefectProbability::from_value(p)
            .ok_or_else(|| err(format!("probability {p} is not one of 0, 1/3, 2/3, 1")))?;
        let wafer: Wafer = fields[2].parse().map_err(|e: Error| err(e.to_string()))?;
        if !seen.insert(path.to_owned()) {
            return Err(err(format!("duplicate image path `{path}`")));
        }
        records.push(CellRecord {
            image_path: path.to_owned(),
            probability,
            wafer,
        });
    }
    Ok(records)
}

pub fn load_index(path: &Path) -> Result<Vec<CellRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_index(&text, path)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
}

/// Distributes `round(fraction * total)` picks over strata by the
/// largest-remainder method. Ties go to the earlier stratum.
fn allocate(sizes: &[usize], fraction: f64) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let target = (fraction * total as f64).round() as usize;
    let quotas: Vec<f64> = sizes.iter().map(|&n| fraction * n as f64).collect();
    let mut counts: Vec<usize> = quotas
        .iter()
        .zip(sizes)
        .map(|(q, &n)| (q.floor() as usize).min(n))
        .collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut remaining = target.saturating_sub(counts.iter().sum());
    for &s in order.iter().cycle().take(order.len() * 2) {
        if remaining == 0 {
            break;
        }
        if counts[s] < sizes[s] {
            counts[s] += 1;
            remaining -= 1;
        }
    }
    counts
}

/// Groups sample indices by (wafer, probability) in canonical order:
/// mono before poly, ascending probability.
fn strata(samples: &[LabeledSample]) -> Result<Vec<Vec<usize>>> {
    let mut groups: BTreeMap<(Wafer, DefectProbability), Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        groups.entry(s.stratum()).or_default().push(i);
    }
    for ((wafer, p), members) in &groups {
        if members.len() < 2 {
            return Err(Error::data(format!(
                "stratum ({wafer}, p={p}) has {} sample(s); at least 2 are required",
                members.len()
            )));
        }
    }
    Ok(groups.into_values().collect())
}

/// Marks `fraction` of every stratum (largest-remainder rounding) as picked.
fn stratified_pick(samples: &[LabeledSample], fraction: f64, seed: u64) -> Result<Vec<bool>> {
    let groups = strata(samples)?;
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let counts = allocate(&sizes, fraction);
    let mut rng = rng::seeded(seed);
    let mut picked = vec![false; samples.len()];
    for (members, count) in groups.into_iter().zip(counts) {
        let mut members = members;
        rng::shuffle(&mut rng, &mut members);
        for &i in &members[..count] {
            picked[i] = true;
        }
    }
    Ok(picked)
}

/// Stratified train/test split on the joint (wafer, probability) key.
///
/// Both halves keep the input order.
pub fn stratified_split(samples: &[LabeledSample], spec: SplitSpec) -> Result<Split> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test fraction {} outside (0, 1)",
            spec.test_fraction
        )));
    }
    let in_test = stratified_pick(samples, spec.test_fraction, spec.seed)?;
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (s, &t) in samples.iter().zip(&in_test) {
        if t {
            split.test.push(s.clone());
        } else {
            split.train.push(s.clone());
        }
    }
    Ok(split)
}

/// Stratified random subset holding `fraction` of every stratum.
pub fn stratified_subsample(
    samples: &[LabeledSample],
    fraction: f64,
    seed: u64,
) -> Result<Vec<LabeledSample>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("subset fraction {fraction} outside (0, 1]")));
    }
    if fraction == 1.0 {
        strata(samples)?;
        return Ok(samples.to_vec());
    }
    let keep = stratified_pick(samples, fraction, seed)?;
    Ok(samples
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(s, _)| s.clone())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights {
    pub functional: f64,
    pub defective: f64,
    pub n_functional: usize,
    pub n_defective: usize,
}

impl ClassWeights {
    pub fn of(&self, label: Label) -> f64 {
        match label {
            Label::Functional => self.functional,
            Label::Defective => self.defective,
        }
    }
}

/// Inverse-proportion class weights `c_j = S / (2 n_j)`.
pub fn class_weights(train: &[LabeledSample]) -> Result<ClassWeights> {
    let n_defective = train.iter().filter(|s| s.label == Label::Defective).count();
    let n_functional = train.len() - n_defective;
    if n_functional == 0 || n_defective == 0 {
        return Err(Error::data(format!(
            "class weights need both classes (functional={n_functional}, defective={n_defective})"
        )));
    }
    let total = train.len() as f64;
    Ok(ClassWeights {
        functional: total / (2.0 * n_functional as f64),
        defective: total / (2.0 * n_defective as f64),
        n_functional,
        n_defective,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    Train,
    Test,
}

/// Writes the split manifest CSV (`path,p,wafer,assignment`), input order.
pub fn write_split_manifest<W: Write>(out: &mut W, split: &Split) -> std::io::Result<()> {
    writeln!(out, "path,p,wafer,assignment")?;
    let rows = split
        .train
        .iter()
        .map(|s| (s, "train"))
        .chain(split.test.iter().map(|s| (s, "test")));
    for (s, tag) in rows {
        writeln!(
            out,
            "{},{},{},{}",
            s.record.image_path, s.record.probability, s.record.wafer, tag
        )?;
    }
    Ok(())
}

pub fn save_split_manifest(path: &Path, split: &Split) -> Result<()> {
    let mut buf = Vec::new();
    write_split_manifest(&mut buf, split).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_split_manifest(path: &Path) -> Result<Split> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Index {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", fields.len())));
        }
        let record = parse_index(&fields[..3].join(" "), path)
            .map_err(|e| err(e.to_string()))?
            .pop()
            .ok_or_else(|| err("empty record".into()))?;
        let sample = to_labeled(record);
        match fields[3] {
            "train" => split.train.push(sample),
            "test" => split.test.push(sample),
            other => return Err(err(format!("unknown assignment `{other}`"))),
        }
    }
    Ok(split)
}
