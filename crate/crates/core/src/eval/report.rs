use std::fmt;
use std::io::Write;

use crate::dataset::{Label, LabeledSample, Wafer};
use crate::error::{Error, Result};

use super::{precision_recall_f1, roc_auc, ConfusionMatrix, Prf, RocCurve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Group {
    Mono,
    Poly,
    Combined,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Mono, Group::Poly, Group::Combined];

    fn contains(self, wafer: Wafer) -> bool {
        match self {
            Group::Mono => wafer == Wafer::Mono,
            Group::Poly => wafer == Wafer::Poly,
            Group::Combined => true,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Mono => "mono",
            Group::Poly => "poly",
            Group::Combined => "combined",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub group: Group,
    pub n: usize,
    pub confusion: ConfusionMatrix,
    pub prf: Prf,
    pub accuracy: f64,
    /// Absent when the group holds a single class.
    pub auc: Option<f64>,
    pub roc: Option<RocCurve>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub groups: Vec<GroupReport>,
    pub warnings: Vec<String>,
    pub digest: String,
}

impl EvalReport {
    pub fn group(&self, g: Group) -> Option<&GroupReport> {
        self.groups.iter().find(|r| r.group == g)
    }
}

/// Metrics for mono, poly and all cells from decision values; hard labels
/// use threshold 0. Empty groups are left out with a warning.
pub fn evaluate_scores(scores: &[f64], samples: &[LabeledSample], digest: &str) -> Result<EvalReport> {
    if scores.len() != samples.len() {
        return Err(Error::invalid(format!("{} scores for {} samples", scores.len(), samples.len())));
    }
    if samples.is_empty() {
        return Err(Error::data("no test samples to evaluate"));
    }
    let mut groups = Vec::new();
    let mut warnings = Vec::new();
    for g in Group::ALL {
        let idx: Vec<usize> = (0..samples.len()).filter(|&i| g.contains(samples[i].record.wafer)).collect();
        if idx.is_empty() {
            warnings.push(format!("group {g} has no test samples and is omitted"));
            continue;
        }
        let truth: Vec<Label> = idx.iter().map(|&i| samples[i].label).collect();
        let pred: Vec<Label> = idx.iter().map(|&i| Label::from_score(scores[i])).collect();
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let confusion = ConfusionMatrix::from_labels(&truth, &pred)?;
        let prf = precision_recall_f1(&confusion)?;
        for (c, absent) in prf.absent.iter().enumerate() {
            if *absent {
                let name = if c == 0 { "functional" } else { "defective" };
                warnings.push(format!("group {g}: class {name} absent from truth and predictions; its F1 is 0"));
            }
        }
        let (roc, auc) = match roc_auc(&s, &truth) {
            Ok((roc, auc)) => (Some(roc), Some(auc)),
            Err(Error::Data(_)) => {
                warnings.push(format!("group {g} holds a single class; AUC undefined"));
                (None, None)
            }
            Err(e) => return Err(e),
        };
        groups.push(GroupReport {
            group: g,
            n: idx.len(),
            accuracy: confusion.accuracy(),
            confusion,
            prf,
            auc,
            roc,
        });
    }
    Ok(EvalReport {
        groups,
        warnings,
        digest: digest.to_owned(),
    })
}

/// `group,metric,value,digest`
pub fn write_metrics_csv<W: Write>(out: &mut W, report: &EvalReport) -> std::io::Result<()> {
    writeln!(out, "group,metric,value,digest")?;
    for g in &report.groups {
        let [f, d] = g.prf.per_class;
        let c = g.confusion.counts;
        let mut rows: Vec<(&str, f64)> = vec![
            ("n", g.n as f64),
            ("accuracy", g.accuracy),
            ("macro_f1", g.prf.macro_f1),
        ];
        if let Some(auc) = g.auc {
            rows.push(("auc", auc));
        }
        rows.extend([
            ("precision_functional", f.precision),
            ("recall_functional", f.recall),
            ("f1_functional", f.f1),
            ("precision_defective", d.precision),
            ("recall_defective", d.recall),
            ("f1_defective", d.f1),
            ("tn", c[0][0] as f64),
            ("fp", c[0][1] as f64),
            ("fn", c[1][0] as f64),
            ("tp", c[1][1] as f64),
        ]);
        for (name, value) in rows {
            writeln!(out, "{},{name},{value},{}", g.group, report.digest)?;
        }
    }
    Ok(())
}

/// `threshold,fpr,tpr`
pub fn write_roc_csv<W: Write>(out: &mut W, roc: &RocCurve) -> std::io::Result<()> {
    writeln!(out, "threshold,fpr,tpr")?;
    for i in 0..roc.fpr.len() {
        writeln!(out, "{},{},{}", roc.thresholds[i], roc.fpr[i], roc.tpr[i])?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub fraction: f64,
    pub repeat: usize,
    pub metric: String,
    pub value: f64,
}

/// `fraction,repeat,metric,value`
pub fn write_learning_curve_csv<W: Write>(out: &mut W, points: &[CurvePoint]) -> std::io::Result<()> {
    writeln!(out, "fraction,repeat,metric,value")?;
    for p in points {
        writeln!(out, "{},{},{},{}", p.fraction, p.repeat, p.metric, p.value)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{to_labeled, CellRecord, DefectProbability};

    fn sample(p: DefectProbability, wafer: Wafer) -> LabeledSample {
        to_labeled(CellRecord {
            image_path: "x.png".into(),
            probability: p,
            wafer,
        })
    }

    fn fixture() -> (Vec<f64>, Vec<LabeledSample>) {
        use DefectProbability::*;
        let samples = vec![
            sample(Zero, Wafer::Mono),
            sample(One, Wafer::Mono),
            sample(Zero, Wafer::Poly),
            sample(TwoThirds, Wafer::Poly),
            sample(Zero, Wafer::Poly),
            sample(OneThird, Wafer::Mono),
        ];
        (vec![-1.0, 2.0, 0.5, 1.5, -0.2, -0.1], samples)
    }

    #[test]
    fn combined_is_the_sum_of_wafer_groups() {
        let (s, x) = fixture();
        let r = evaluate_scores(&s, &x, "abc").unwrap();
        let (m, p, c) = (r.group(Group::Mono).unwrap(), r.group(Group::Poly).unwrap(), r.group(Group::Combined).unwrap());
        assert_eq!(m.confusion.add(&p.confusion), c.confusion);
        assert_eq!(c.n, 6);
    }

    #[test]
    fn only_poly_cells() {
        let (s, x) = fixture();
        let idx = [2usize, 3, 4];
        let s2: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
        let x2: Vec<LabeledSample> = idx.iter().map(|&i| x[i].clone()).collect();
        let r = evaluate_scores(&s2, &x2, "d").unwrap();
        assert!(r.group(Group::Mono).is_none());
        assert_eq!(r.warnings.len(), 1);
        let (p, c) = (r.group(Group::Poly).unwrap(), r.group(Group::Combined).unwrap());
        assert_eq!((p.confusion, p.auc, p.prf), (c.confusion, c.auc, c.prf));
    }

    #[test]
    fn permutation_leaves_metrics_identical() {
        let (s, x) = fixture();
        let order = [5usize, 3, 1, 0, 4, 2];
        let s2: Vec<f64> = order.iter().map(|&i| s[i]).collect();
        let x2: Vec<LabeledSample> = order.iter().map(|&i| x[i].clone()).collect();
        let a = evaluate_scores(&s, &x, "d").unwrap();
        let b = evaluate_scores(&s2, &x2, "d").unwrap();
        let csv = |r: &EvalReport| {
            let mut v = Vec::new();
            write_metrics_csv(&mut v, r).unwrap();
            v
        };
        assert_eq!(csv(&a), csv(&b));
    }

    #[test]
    fn csv_layouts() {
        let (s, x) = fixture();
        let r = evaluate_scores(&s, &x, "abc").unwrap();
        let mut m = Vec::new();
        write_metrics_csv(&mut m, &r).unwrap();
        let text = String::from_utf8(m).unwrap();
        assert!(text.starts_with("group,metric,value,digest\n"));
        assert!(text.contains("combined,n,6,abc\n"));
        let mut roc = Vec::new();
        write_roc_csv(&mut roc, r.group(Group::Combined).unwrap().roc.as_ref().unwrap()).unwrap();
        let roc = String::from_utf8(roc).unwrap();
        assert!(roc.starts_with("threshold,fpr,tpr\ninf,0,0\n"));
        assert!(roc.trim_end().ends_with(",1,1"));
        let mut lc = Vec::new();
        write_learning_curve_csv(&mut lc, &[CurvePoint { fraction: 0.25, repeat: 3, metric: "macro_f1".into(), value: 0.5 }]).unwrap();
        assert_eq!(String::from_utf8(lc).unwrap(), "fraction,repeat,metric,value\n0.25,3,macro_f1,0.5\n");
    }
}
