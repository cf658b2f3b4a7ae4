//! Classification metrics: confusion matrices, precision/recall/F1, ROC
//! and AUC, per-wafer reports and boxplot summaries.

mod report;
mod stats;

pub use report::{
    evaluate_scores, write_learning_curve_csv, write_metrics_csv, write_roc_csv, CurvePoint, EvalReport, Group,
    GroupReport,
};
pub use stats::{boxplot, BoxStats};

use crate::dataset::Label;
use crate::error::{Error, Result};

/// Counts indexed `[truth][prediction]`, functional first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn from_labels(truth: &[Label], pred: &[Label]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::invalid(format!(
                "{} ground-truth labels but {} predictions",
                truth.len(),
                pred.len()
            )));
        }
        let mut counts = [[0u64; 2]; 2];
        for (t, p) in truth.iter().zip(pred) {
            counts[t.index()][p.index()] += 1;
        }
        Ok(Self { counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        (self.counts[0][0] + self.counts[1][1]) as f64 / self.total() as f64
    }

    /// Rows divided by their sums; an empty row stays zero.
    pub fn row_normalized(&self) -> [[f64; 2]; 2] {
        let mut out = [[0.0; 2]; 2];
        for (o, row) in out.iter_mut().zip(&self.counts) {
            let s = (row[0] + row[1]) as f64;
            if s > 0.0 {
                *o = [row[0] as f64 / s, row[1] as f64 / s];
            }
        }
        out
    }

    pub fn add(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        let mut counts = self.counts;
        for i in 0..2 {
            for j in 0..2 {
                counts[i][j] += other.counts[i][j];
            }
        }
        ConfusionMatrix { counts }
    }

    fn as_f64(&self) -> [[f64; 2]; 2] {
        self.counts.map(|r| r.map(|v| v as f64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    /// Indexed by [`Label::index`].
    pub per_class: [ClassScores; 2],
    pub macro_f1: f64,
    /// Class absent from both truth and predictions; its F1 is 0.
    pub absent: [bool; 2],
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn prf_from(m: [[f64; 2]; 2]) -> Prf {
    let mut per_class = [ClassScores {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    }; 2];
    let mut absent = [false; 2];
    for c in 0..2 {
        let o = 1 - c;
        let (tp, fp, fneg) = (m[c][c], m[o][c], m[c][o]);
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fneg);
        let f1 = ratio(2.0 * precision * recall, precision + recall);
        per_class[c] = ClassScores { precision, recall, f1 };
        absent[c] = tp + fp + fneg == 0.0;
    }
    Prf {
        per_class,
        macro_f1: (per_class[0].f1 + per_class[1].f1) / 2.0,
        absent,
    }
}

pub fn precision_recall_f1(cm: &ConfusionMatrix) -> Result<Prf> {
    if cm.total() == 0 {
        return Err(Error::invalid("empty confusion matrix"));
    }
    Ok(prf_from(cm.as_f64()))
}

/// Macro-F1 over a confusion matrix whose cells sum sample weights.
pub fn weighted_macro_f1(truth: &[Label], pred: &[Label], weights: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() || truth.len() != weights.len() {
        return Err(Error::invalid("labels, predictions and weights differ in length"));
    }
    if truth.is_empty() {
        return Err(Error::invalid("no samples to score"));
    }
    let mut m = [[0.0f64; 2]; 2];
    for ((t, p), w) in truth.iter().zip(pred).zip(weights) {
        m[t.index()][p.index()] += w;
    }
    Ok(prf_from(m).macro_f1)
}

/// Score-descending ROC with tied scores taken as one step.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `+inf` for the initial `(0, 0)` point.
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
}

/// ROC curve and AUC. The AUC is computed exactly from pair counts
/// (ties count one half), which equals the trapezoidal area under the
/// tie-grouped curve.
pub fn roc_auc(scores: &[f64], truth: &[Label]) -> Result<(RocCurve, f64)> {
    if scores.len() != truth.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::numerical("non-finite score"));
    }
    let pos = truth.iter().filter(|&&l| l == Label::Defective).count() as u64;
    let neg = truth.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::data("ROC analysis needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut curve = RocCurve {
        thresholds: vec![f64::INFINITY],
        fpr: vec![0.0],
        tpr: vec![0.0],
    };
    let (mut tp, mut fp) = (0u64, 0u64);
    // twice the Mann-Whitney U, kept integral
    let mut twice_u: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut gp, mut gn) = (0u64, 0u64);
        while i < order.len() && scores[order[i]] == s {
            match truth[order[i]] {
                Label::Defective => gp += 1,
                Label::Functional => gn += 1,
            }
            i += 1;
        }
        // positives in this group beat every negative below the group
        let below = neg - fp - gn;
        twice_u += gp as u128 * (2 * below as u128 + gn as u128);
        tp += gp;
        fp += gn;
        curve.thresholds.push(s);
        curve.fpr.push(fp as f64 / neg as f64);
        curve.tpr.push(tp as f64 / pos as f64);
    }
    let auc = twice_u as f64 / (2 * pos as u128 * neg as u128) as f64;
    Ok((curve, auc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::{Defective as D, Functional as F};

    #[test]
    fn confusion_basics() {
        let truth = [F, F, D, D];
        let cm = ConfusionMatrix::from_labels(&truth, &truth).unwrap();
        assert_eq!(cm.counts, [[2, 0], [0, 2]]);
        assert_eq!(cm.accuracy(), 1.0);
        let all_def = ConfusionMatrix::from_labels(&truth, &[D; 4]).unwrap();
        assert_eq!(all_def.counts[0], [0, 2]);
        for row in all_def.row_normalized() {
            assert_eq!(row[0] + row[1], 1.0);
        }
        assert!(ConfusionMatrix::from_labels(&truth, &[D; 3]).is_err());
    }

    #[test]
    fn f1_worked_example() {
        // defective: TP 40, FP 10, FN 20; 30 true negatives
        let cm = ConfusionMatrix {
            counts: [[30, 10], [20, 40]],
        };
        let prf = precision_recall_f1(&cm).unwrap();
        let d = prf.per_class[D.index()];
        assert!((d.precision - 0.8).abs() < 1e-15);
        assert!((d.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.f1 - 8.0 / 11.0).abs() < 1e-15);
        let perfect = precision_recall_f1(&ConfusionMatrix { counts: [[3, 0], [0, 5]] }).unwrap();
        assert_eq!(perfect.macro_f1, 1.0);
    }

    #[test]
    fn absent_class_scores_zero() {
        let cm = ConfusionMatrix::from_labels(&[D, D], &[D, D]).unwrap();
        let prf = precision_recall_f1(&cm).unwrap();
        assert_eq!(prf.absent, [true, false]);
        assert_eq!(prf.per_class[0].f1, 0.0);
        assert_eq!(prf.macro_f1, 0.5);
        assert!(precision_recall_f1(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn auc_extremes_and_pair_example() {
        let truth = [F, F, D, D];
        assert_eq!(roc_auc(&[0.1, 0.2, 0.3, 0.4], &truth).unwrap().1, 1.0);
        assert_eq!(roc_auc(&[0.4, 0.3, 0.2, 0.1], &truth).unwrap().1, 0.0);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.3], &[D, F, D]).unwrap().1, 0.5);
        assert_eq!(roc_auc(&[0.5; 4], &truth).unwrap().1, 0.5);
        assert!(roc_auc(&[0.1, 0.2], &[D, D]).is_err());
    }

    fn brute_auc(scores: &[f64], truth: &[Label]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (sp, _) in scores.iter().zip(truth).filter(|(_, &l)| l == D) {
            for (sn, _) in scores.iter().zip(truth).filter(|(_, &l)| l == F) {
                pairs += 1.0;
                wins += if sp > sn { 1.0 } else if sp == sn { 0.5 } else { 0.0 };
            }
        }
        wins / pairs
    }

    fn trapezoid(c: &RocCurve) -> f64 {
        (1..c.fpr.len()).map(|i| (c.fpr[i] - c.fpr[i - 1]) * (c.tpr[i] + c.tpr[i - 1]) / 2.0).sum()
    }

    proptest! {
        #[test]
        fn auc_agrees_with_pairs_and_trapezoid(data in prop::collection::vec((0u8..6, any::<bool>()), 2..60)) {
            let scores: Vec<f64> = data.iter().map(|&(s, _)| s as f64).collect();
            let truth: Vec<Label> = data.iter().map(|&(_, d)| if d { D } else { F }).collect();
            prop_assume!(truth.contains(&D) && truth.contains(&F));
            let (curve, auc) = roc_auc(&scores, &truth).unwrap();
            prop_assert!((auc - brute_auc(&scores, &truth)).abs() < 1e-12);
            prop_assert!((auc - trapezoid(&curve)).abs() < 1e-12);
            prop_assert_eq!((curve.fpr[0], curve.tpr[0]), (0.0, 0.0));
            prop_assert_eq!((*curve.fpr.last().unwrap(), *curve.tpr.last().unwrap()), (1.0, 1.0));
            prop_assert!(curve.fpr.windows(2).all(|w| w[0] <= w[1]) && curve.tpr.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn auc_is_rank_invariant(data in prop::collection::vec((-10.0f64..10.0, any::<bool>()), 2..60)) {
            let scores: Vec<f64> = data.iter().map(|&(s, _)| s).collect();
            let truth: Vec<Label> = data.iter().map(|&(_, d)| if d { D } else { F }).collect();
            prop_assume!(truth.contains(&D) && truth.contains(&F));
            let base = roc_auc(&scores, &truth).unwrap().1;
            let affine: Vec<f64> = scores.iter().map(|s| 3.0 * s + 7.0).collect();
            let cubic: Vec<f64> = scores.iter().map(|s| s * s * s + s).collect();
            prop_assert!((roc_auc(&affine, &truth).unwrap().1 - base).abs() <= 1e-12);
            prop_assert!((roc_auc(&cubic, &truth).unwrap().1 - base).abs() <= 1e-12);
        }

        #[test]
        fn macro_f1_is_class_symmetric(data in prop::collection::vec((any::<bool>(), any::<bool>()), 1..50)) {
            let truth: Vec<Label> = data.iter().map(|&(t, _)| if t { D } else { F }).collect();
            let pred: Vec<Label> = data.iter().map(|&(_, p)| if p { D } else { F }).collect();
            let flip = |l: &Label| if *l == D { F } else { D };
            let a = precision_recall_f1(&ConfusionMatrix::from_labels(&truth, &pred).unwrap()).unwrap();
            let ts: Vec<Label> = truth.iter().map(flip).collect();
            let ps: Vec<Label> = pred.iter().map(flip).collect();
            let b = precision_recall_f1(&ConfusionMatrix::from_labels(&ts, &ps).unwrap()).unwrap();
            prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-15);
            let cm = ConfusionMatrix::from_labels(&truth, &pred).unwrap();
            prop_assert_eq!(cm.accuracy(), (cm.counts[0][0] + cm.counts[1][1]) as f64 / cm.total() as f64);
        }
    }
}
