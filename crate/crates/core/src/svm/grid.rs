//! Hyperparameter selection by stratified k-fold cross-validation.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::eval::weighted_macro_f1;
use crate::rng;

use super::{check_training_set, train, KernelKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    Fixed(f64),
    /// `1 / S` for `S` features.
    InverseDim,
}

impl Gamma {
    pub fn resolve(self, dim: usize) -> f64 {
        match self {
            Gamma::Fixed(g) => g,
            Gamma::InverseDim => 1.0 / dim.max(1) as f64,
        }
    }
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gamma::Fixed(g) => write!(f, "{g}"),
            Gamma::InverseDim => f.write_str("1/S"),
        }
    }
}

impl FromStr for Gamma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "1/S" {
            return Ok(Gamma::InverseDim);
        }
        s.parse()
            .ok()
            .filter(|g: &f64| *g > 0.0)
            .map(Gamma::Fixed)
            .ok_or_else(|| Error::invalid(format!("gamma `{s}`: expected a positive number or 1/S")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchSpec {
    pub kernel: KernelKind,
    pub c: Vec<f64>,
    /// Ignored for the linear kernel.
    pub gamma: Vec<Gamma>,
    pub folds: usize,
    pub seed: u64,
}

impl GridSearchSpec {
    /// `C ∈ {10^-2, …, 10^6}`
    pub fn linear(seed: u64) -> Self {
        Self {
            kernel: KernelKind::Linear,
            c: (-2..=6).map(|k| 10f64.powi(k)).collect(),
            gamma: Vec::new(),
            folds: 5,
            seed,
        }
    }

    /// `C ∈ {10^2, …, 10^6}`, `γ ∈ {10^-7, 10^-6, 1/S}`
    pub fn rbf(seed: u64) -> Self {
        Self {
            kernel: KernelKind::Rbf,
            c: (2..=6).map(|k| 10f64.powi(k)).collect(),
            gamma: vec![Gamma::Fixed(1e-7), Gamma::Fixed(1e-6), Gamma::InverseDim],
            folds: 5,
            seed,
        }
    }

    pub fn for_kernel(kernel: KernelKind, seed: u64) -> Self {
        match kernel {
            KernelKind::Linear => Self::linear(seed),
            KernelKind::Rbf => Self::rbf(seed),
        }
    }

    /// Candidates sorted by C, then gamma, which is the tie-break order.
    pub fn candidates(&self, dim: usize) -> Result<Vec<Candidate>> {
        if self.c.is_empty() || self.c.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::invalid("C candidates must be a non-empty set of positive numbers"));
        }
        let mut out = Vec::new();
        for &c in &self.c {
            match self.kernel {
                KernelKind::Linear => out.push(Candidate { c, gamma: None }),
                KernelKind::Rbf => {
                    if self.gamma.is_empty() {
                        return Err(Error::invalid("an RBF grid needs gamma candidates"));
                    }
                    for g in &self.gamma {
                        out.push(Candidate { c, gamma: Some(g.resolve(dim)) });
                    }
                }
            }
        }
        out.sort_by(|a, b| a.c.total_cmp(&b.c).then(a.gamma.unwrap_or(0.0).total_cmp(&b.gamma.unwrap_or(0.0))));
        out.dedup();
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub c: f64,
    pub gamma: Option<f64>,
}

/// One line of the cross-validation table.
#[derive(Debug, Clone, PartialEq)]
pub struct CvRow {
    pub c: f64,
    pub gamma: Option<f64>,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
}

impl CvRow {
    pub fn candidate(&self) -> Candidate {
        Candidate {
            c: self.c,
            gamma: self.gamma,
        }
    }
}

/// `C gamma|- mean fold...`, floats in shortest round-trip form.
impl fmt::Display for CvRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ", self.c)?;
        match self.gamma {
            Some(g) => write!(f, "{g}")?,
            None => f.write_str("-")?,
        }
        write!(f, " {}", self.mean)?;
        for s in &self.fold_scores {
            write!(f, " {s}")?;
        }
        Ok(())
    }
}

impl FromStr for CvRow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Container(format!("malformed cross-validation row `{s}`"));
        let mut it = s.split(' ');
        let c = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let gamma = match it.next().ok_or_else(bad)? {
            "-" => None,
            g => Some(g.parse().map_err(|_| bad())?),
        };
        let mean = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let fold_scores = it.map(|v| v.parse().map_err(|_| bad())).collect::<Result<_>>()?;
        Ok(Self {
            c,
            gamma,
            fold_scores,
            mean,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best: Candidate,
    pub table: Vec<CvRow>,
}

/// Fold id per sample. Each class is shuffled and dealt round-robin, the
/// second class continuing where the first stopped, so every fold holds
/// each class's share to within one sample.
pub fn stratified_folds(y: &[f64], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    let mut rng = rng::seeded(seed);
    let mut out = vec![0usize; y.len()];
    let mut offset = 0;
    for class in [-1.0, 1.0] {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if members.len() < folds {
            return Err(Error::data(format!(
                "class {class:+} has {} samples, fewer than the {folds} folds",
                members.len()
            )));
        }
        rng::shuffle(&mut rng, &mut members);
        for (k, &i) in members.iter().enumerate() {
            out[i] = (offset + k) % folds;
        }
        offset += members.len();
    }
    Ok(out)
}

fn subset<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

/// Mean held-out macro-F1 per candidate, with fold predictions scored
/// under `score_weights`. Only the data passed in is ever touched.
pub fn grid_search(
    x: &[Vec<f64>],
    y: &[f64],
    train_weights: &[f64],
    score_weights: &[f64],
    spec: &GridSearchSpec,
) -> Result<GridResult> {
    let dim = check_training_set(x, y, train_weights)?;
    if score_weights.len() != y.len() {
        return Err(Error::invalid("one scoring weight per sample is required"));
    }
    let candidates = spec.candidates(dim)?;
    let fold_of = stratified_folds(y, spec.folds, spec.seed)?;
    let jobs: Vec<(usize, usize)> = (0..candidates.len())
        .flat_map(|c| (0..spec.folds).map(move |f| (c, f)))
        .collect();
    let scores = jobs
        .par_iter()
        .map(|&(c, f)| {
            let train_idx: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] != f).collect();
            let test_idx: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] == f).collect();
            let model = train(
                &subset(x, &train_idx),
                &subset(y, &train_idx),
                &subset(train_weights, &train_idx),
                spec.kernel,
                candidates[c],
                spec.seed.wrapping_add(f as u64),
            )?;
            let mut truth = Vec::with_capacity(test_idx.len());
            let mut pred = Vec::with_capacity(test_idx.len());
            for &i in &test_idx {
                truth.push(Label::from_score(y[i]));
                pred.push(Label::from_score(model.decision_value(&x[i])?));
            }
            weighted_macro_f1(&truth, &pred, &subset(score_weights, &test_idx))
        })
        .collect::<Result<Vec<f64>>>()?;

    let table: Vec<CvRow> = candidates
        .iter()
        .enumerate()
        .map(|(c, cand)| {
            let fold_scores = scores[c * spec.folds..(c + 1) * spec.folds].to_vec();
            let mean = fold_scores.iter().sum::<f64>() / spec.folds as f64;
            CvRow {
                c: cand.c,
                gamma: cand.gamma,
                fold_scores,
                mean,
            }
        })
        .collect();
    let mut best = 0;
    for (i, row) in table.iter().enumerate() {
        if row.mean > table[best].mean {
            best = i;
        }
    }
    Ok(GridResult {
        best: table[best].candidate(),
        table,
    })
}
