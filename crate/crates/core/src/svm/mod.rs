//! Weighted linear and RBF support vector machines with grid search.

mod grid;
mod linear;
mod rbf;

use std::fmt;
use std::str::FromStr;

pub use grid::{grid_search, stratified_folds, Candidate, CvRow, Gamma, GridResult, GridSearchSpec};
pub use linear::{linear_dual_objective, linear_primal_objective, train_linear, LinearParams, LinearSvmModel};
pub use rbf::{rbf_dual_objective, train_rbf, train_rbf_with_dual, RbfParams, RbfSvmModel};

use crate::container::Container;
use crate::error::{Error, Result};

const KIND: &str = "svm-model";
const VERSION: u32 = 1;

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Validates a training set and returns its dimension.
pub(crate) fn check_training_set(x: &[Vec<f64>], y: &[f64], weights: &[f64]) -> Result<usize> {
    if x.len() != y.len() || x.len() != weights.len() {
        return Err(Error::invalid(format!(
            "{} samples, {} labels and {} weights",
            x.len(),
            y.len(),
            weights.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::data("an SVM needs at least two training samples"));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("feature vectors differ in length"));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite feature value"));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::invalid("labels must be +1 or -1"));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::data("training data contains a single class"));
    }
    if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::invalid("sample weights must be positive and finite"));
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Linear,
    Rbf,
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Linear => "linear",
            KernelKind::Rbf => "rbf",
        })
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(KernelKind::Linear),
            "rbf" => Ok(KernelKind::Rbf),
            _ => Err(Error::invalid(format!("kernel `{s}`: expected linear or rbf"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SvmModel {
    Linear(LinearSvmModel),
    Rbf(RbfSvmModel),
}

impl SvmModel {
    pub fn kernel(&self) -> KernelKind {
        match self {
            SvmModel::Linear(_) => KernelKind::Linear,
            SvmModel::Rbf(_) => KernelKind::Rbf,
        }
    }

    /// Positive scores predict the defective class.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        match self {
            SvmModel::Linear(m) => m.decision_value(x),
            SvmModel::Rbf(m) => m.decision_value(x),
        }
    }

    pub fn c(&self) -> f64 {
        match self {
            SvmModel::Linear(m) => m.c,
            SvmModel::Rbf(m) => m.c,
        }
    }

    pub fn to_container(&self, cv_table: &[CvRow]) -> Container {
        let mut c = Container::new(KIND);
        c.set("version", VERSION);
        c.set("kernel", self.kernel());
        c.set("C", self.c());
        match self {
            SvmModel::Linear(m) => {
                c.set("dim", m.w.len());
                c.push_f32("w", m.w.iter().map(|&v| v as f32).collect());
                c.push_f32("bias", vec![m.b as f32]);
            }
            SvmModel::Rbf(m) => {
                c.set("gamma", m.gamma);
                c.set("dim", m.dim().unwrap_or(0));
                c.set("n_support", m.support_vectors.len());
                c.push_f32("support_vectors", m.support_vectors.iter().flatten().map(|&v| v as f32).collect());
                c.push_f32("coefficients", m.coefficients.iter().map(|&v| v as f32).collect());
                c.push_f32("bias", vec![m.b as f32]);
            }
        }
        c.set("cv_rows", cv_table.len());
        for (i, row) in cv_table.iter().enumerate() {
            c.set(&format!("cv.{i}"), row);
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<(Self, Vec<CvRow>)> {
        c.expect_kind(KIND)?;
        let version: u32 = c.parse("version")?;
        if version != VERSION {
            return Err(Error::Container(format!("unsupported model version {version}")));
        }
        let kernel: KernelKind = c.get("kernel")?.parse().map_err(|_| Error::Container("bad kernel".into()))?;
        let cost: f64 = c.parse("C")?;
        let dim: usize = c.parse("dim")?;
        let bias = match c.f32_section("bias")? {
            [b] => *b as f64,
            _ => return Err(Error::Container("bias section must hold one value".into())),
        };
        let model = match kernel {
            KernelKind::Linear => {
                let w: Vec<f64> = c.f32_section("w")?.iter().map(|&v| v as f64).collect();
                if w.len() != dim {
                    return Err(Error::Container("weight vector has the wrong size".into()));
                }
                SvmModel::Linear(LinearSvmModel {
                    w,
                    b: bias,
                    c: cost,
                    alpha: Vec::new(),
                    epochs: 0,
                    converged: true,
                })
            }
            KernelKind::Rbf => {
                let n: usize = c.parse("n_support")?;
                let sv = c.f32_section("support_vectors")?;
                let coef = c.f32_section("coefficients")?;
                if sv.len() != n * dim || coef.len() != n || (n > 0 && dim == 0) {
                    return Err(Error::Container("support vector sections have the wrong size".into()));
                }
                SvmModel::Rbf(RbfSvmModel {
                    support_vectors: sv.chunks_exact(dim.max(1)).map(|r| r.iter().map(|&v| v as f64).collect()).collect(),
                    coefficients: coef.iter().map(|&v| v as f64).collect(),
                    b: bias,
                    gamma: c.parse("gamma")?,
                    c: cost,
                    iterations: 0,
                    converged: true,
                })
            }
        };
        let rows: usize = c.parse("cv_rows")?;
        let table = (0..rows)
            .map(|i| c.parse::<CvRow>(&format!("cv.{i}")))
            .collect::<Result<Vec<_>>>()?;
        Ok((model, table))
    }

    /// The model as it will be after a save/load round trip.
    pub fn quantized(&self) -> Result<Self> {
        Ok(Self::from_container(&self.to_container(&[]))?.0)
    }
}

/// Trains one model for a grid candidate.
pub fn train(
    x: &[Vec<f64>],
    y: &[f64],
    weights: &[f64],
    kernel: KernelKind,
    candidate: Candidate,
    seed: u64,
) -> Result<SvmModel> {
    match kernel {
        KernelKind::Linear => {
            let mut p = LinearParams::new(candidate.c);
            p.seed = seed;
            Ok(SvmModel::Linear(train_linear(x, y, weights, p)?))
        }
        KernelKind::Rbf => {
            let gamma = candidate
                .gamma
                .ok_or_else(|| Error::invalid("an RBF candidate needs a gamma value"))?;
            Ok(SvmModel::Rbf(train_rbf(x, y, weights, RbfParams::new(candidate.c, gamma))?))
        }
    }
}
