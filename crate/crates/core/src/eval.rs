//! Multi-label evaluation: sample-wise accuracy, precision, recall and
//! F-score, micro-averaged AUROC and average precision, and MCC over the
//! flattened decision matrix.

use std::fmt::Write as _;

use ndarray::{ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("score matrix is {scores:?} but targets are {targets:?}")]
    ShapeMismatch {
        scores: (usize, usize),
        targets: (usize, usize),
    },
    #[error("target at ({0}, {1}) is not 0 or 1")]
    NonBinaryTarget(usize, usize),
    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{0} is undefined: {1}")]
    Undefined(&'static str, &'static str),
    #[error("no samples to evaluate")]
    Empty,
}

/// Probability that a random positive outscores a random negative, ties
/// counted as one half (Mann-Whitney U / (n_pos * n_neg)).
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    let positives = labels.iter().filter(|&&l| l != 0).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::Undefined("AUROC", "needs both positive and negative labels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Average 1-based ranks over tie blocks.
    let mut positive_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let mean_rank = (start + end + 1) as f64 / 2.0;
        let block_positives = order[start..end].iter().filter(|&&i| labels[i] != 0).count();
        positive_rank_sum += mean_rank * block_positives as f64;
        start = end;
    }
    let (p, n) = (positives as f64, negatives as f64);
    Ok((positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision: sum over descending score cut points of
/// `(recall gain) * precision`, equal scores handled as one cut.
pub fn auprc(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    let positives = labels.iter().filter(|&&l| l != 0).count();
    if positives == 0 {
        return Err(EvalError::Undefined("AUPRC", "needs at least one positive label"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let gained = order[start..end].iter().filter(|&&i| labels[i] != 0).count();
        tp += gained;
        seen += end - start;
        if gained > 0 {
            ap += (gained as f64 / positives as f64) * (tp as f64 / seen as f64);
        }
        start = end;
    }
    Ok(ap)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn from_pairs<I: IntoIterator<Item = (bool, bool)>>(pairs: I) -> Self {
        let mut c = Confusion::default();
        for (predicted, actual) in pairs {
            match (predicted, actual) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    /// Matthews correlation; 0 when any marginal is empty.
    pub fn mcc(&self) -> f64 {
        let (tp, tn, fp, fn_) = (self.tp as f64, self.tn as f64, self.fp as f64, self.fn_ as f64);
        let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        if denom == 0.0 {
            0.0
        } else {
            (tp * tn - fp * fn_) / denom.sqrt()
        }
    }
}

pub fn mcc(decisions: &[u8], labels: &[u8]) -> Result<f64, EvalError> {
    if decisions.len() != labels.len() {
        return Err(EvalError::LengthMismatch(decisions.len(), labels.len()));
    }
    Ok(Confusion::from_pairs(decisions.iter().zip(labels).map(|(&d, &l)| (d != 0, l != 0))).mcc())
}

/// Precision, recall and F1 of one sample's predicted group set against its
/// true set. An empty prediction has precision 1 when the truth is also
/// empty and 0 otherwise; an empty truth has recall 1.
pub fn sample_scores(predicted: &[bool], actual: &[bool]) -> (f64, f64, f64) {
    let hits = predicted.iter().zip(actual).filter(|(p, a)| **p && **a).count() as f64;
    let n_pred = predicted.iter().filter(|p| **p).count() as f64;
    let n_true = actual.iter().filter(|a| **a).count() as f64;
    let precision = match (n_pred == 0.0, n_true == 0.0) {
        (true, true) => 1.0,
        (true, false) => 0.0,
        _ => hits / n_pred,
    };
    let recall = if n_true == 0.0 { 1.0 } else { hits / n_true };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub group: usize,
    pub prevalence: f64,
    pub predicted_rate: f64,
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
    pub f_score: f64,
    pub mcc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub mcc: f64,
    pub threshold: f64,
    /// Averaging mode of AUROC/AUPRC.
    pub averaging: String,
    pub samples: usize,
    pub labels: usize,
    pub per_group: Vec<GroupMetrics>,
}

/// Row names of the comparison table, in display order.
pub const METRIC_NAMES: [&str; 7] = ["AUROC", "AUPRC", "Accuracy", "Precision", "Recall", "F-Score", "MCC"];

impl EvalReport {
    /// The seven headline metrics in [`METRIC_NAMES`] order.
    pub fn headline(&self) -> [Option<f64>; 7] {
        [
            self.auroc,
            self.auprc,
            Some(self.accuracy),
            Some(self.precision),
            Some(self.recall),
            Some(self.f_score),
            Some(self.mcc),
        ]
    }

    /// Fixed-width table of the headline metrics followed by the per-group breakdown.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        writeln!(out, "{:<12}{:>10}", "Metric", "Value").unwrap();
        for (name, v) in METRIC_NAMES.iter().zip(self.headline()) {
            writeln!(out, "{name:<12}{:>10}", fmt(v)).unwrap();
        }
        writeln!(
            out,
            "\n{} samples x {} labels, threshold {}, {}-averaged AUROC/AUPRC\n",
            self.samples, self.labels, self.threshold, self.averaging
        )
        .unwrap();
        writeln!(
            out,
            "{:<6}{:>11}{:>11}{:>9}{:>9}{:>9}{:>9}",
            "Group", "Prevalence", "Predicted", "AUROC", "AUPRC", "F1", "MCC"
        )
        .unwrap();
        for g in &self.per_group {
            writeln!(
                out,
                "{:<6}{:>11.4}{:>11.4}{:>9}{:>9}{:>9.4}{:>9.4}",
                g.group,
                g.prevalence,
                g.predicted_rate,
                fmt(g.auroc),
                fmt(g.auprc),
                g.f_score,
                g.mcc
            )
            .unwrap();
        }
        out
    }
}

fn column_metrics(scores: ArrayView1<f64>, targets: ArrayView1<f64>, threshold: f64, group: usize) -> GroupMetrics {
    let s: Vec<f64> = scores.to_vec();
    let y: Vec<u8> = targets.iter().map(|&t| u8::from(t == 1.0)).collect();
    let decided: Vec<bool> = s.iter().map(|&v| v >= threshold).collect();
    let confusion = Confusion::from_pairs(decided.iter().zip(&y).map(|(&d, &l)| (d, l == 1)));
    let (tp, fp, fn_) = (confusion.tp as f64, confusion.fp as f64, confusion.fn_ as f64);
    let f_score = if 2.0 * tp + fp + fn_ == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    };
    let n = s.len().max(1) as f64;
    GroupMetrics {
        group,
        prevalence: y.iter().filter(|&&l| l == 1).count() as f64 / n,
        predicted_rate: decided.iter().filter(|&&d| d).count() as f64 / n,
        auroc: auroc(&s, &y).ok(),
        auprc: auprc(&s, &y).ok(),
        f_score,
        mcc: confusion.mcc(),
    }
}

/// Evaluates an `N x L` score matrix against binary targets. Decisions are
/// `score >= threshold`. AUROC/AUPRC are `None` when the flattened targets
/// are single-class.
pub fn evaluate(scores: ArrayView2<f64>, targets: ArrayView2<f64>, threshold: f64) -> Result<EvalReport, EvalError> {
    if scores.dim() != targets.dim() {
        return Err(EvalError::ShapeMismatch {
            scores: scores.dim(),
            targets: targets.dim(),
        });
    }
    let (n, l) = scores.dim();
    if n == 0 || l == 0 {
        return Err(EvalError::Empty);
    }
    if let Some(((i, j), _)) = targets.indexed_iter().find(|(_, &t)| t != 0.0 && t != 1.0) {
        return Err(EvalError::NonBinaryTarget(i, j));
    }

    let (mut acc, mut prec, mut rec, mut f1) = (0.0, 0.0, 0.0, 0.0);
    for (srow, trow) in scores.outer_iter().zip(targets.outer_iter()) {
        let predicted: Vec<bool> = srow.iter().map(|&s| s >= threshold).collect();
        let actual: Vec<bool> = trow.iter().map(|&t| t == 1.0).collect();
        let correct = predicted.iter().zip(&actual).filter(|(p, a)| p == a).count();
        acc += correct as f64 / l as f64;
        let (p, r, f) = sample_scores(&predicted, &actual);
        prec += p;
        rec += r;
        f1 += f;
    }
    let nf = n as f64;

    let flat_scores: Vec<f64> = scores.iter().copied().collect();
    let flat_labels: Vec<u8> = targets.iter().map(|&t| u8::from(t == 1.0)).collect();
    let confusion = Confusion::from_pairs(
        flat_scores
            .iter()
            .zip(&flat_labels)
            .map(|(&s, &y)| (s >= threshold, y == 1)),
    );

    let per_group = (0..l)
        .map(|j| {
            column_metrics(
                scores.index_axis(Axis(1), j),
                targets.index_axis(Axis(1), j),
                threshold,
                j + 1,
            )
        })
        .collect();

    Ok(EvalReport {
        auroc: auroc(&flat_scores, &flat_labels).ok(),
        auprc: auprc(&flat_scores, &flat_labels).ok(),
        accuracy: acc / nf,
        precision: prec / nf,
        recall: rec / nf,
        f_score: f1 / nf,
        mcc: confusion.mcc(),
        threshold,
        averaging: "micro".to_string(),
        samples: n,
        labels: l,
        per_group,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn auroc_examples() {
        assert!(close(auroc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75));
        assert!(close(auroc(&[0.0, 1.0, 1.0, 0.0], &[0, 1, 1, 0]).unwrap(), 1.0));
        assert!(close(auroc(&[0.3; 5], &[0, 1, 1, 0, 1]).unwrap(), 0.5));
        assert!(matches!(auroc(&[0.1, 0.2], &[1, 1]), Err(EvalError::Undefined(..))));
        assert!(matches!(auroc(&[0.1], &[1, 0]), Err(EvalError::LengthMismatch(1, 2))));
    }

    #[test]
    fn auprc_examples() {
        assert!(close(auprc(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0));
        assert!(close(auprc(&[0.8, 0.6, 0.4], &[1, 0, 1]).unwrap(), 5.0 / 6.0));
        assert!(close(auprc(&[0.9, 0.8, 0.7, 0.1], &[0, 0, 0, 1]).unwrap(), 0.25));
        assert!(close(auprc(&[0.5, 0.5, 0.5, 0.5], &[1, 0, 0, 0]).unwrap(), 0.25));
        assert!(matches!(auprc(&[0.1, 0.2], &[0, 0]), Err(EvalError::Undefined(..))));
    }

    #[test]
    fn mcc_examples() {
        assert!(close(mcc(&[1, 0, 1, 0], &[1, 0, 1, 0]).unwrap(), 1.0));
        assert!(close(mcc(&[0, 1, 0, 1], &[1, 0, 1, 0]).unwrap(), -1.0));
        assert!(close(mcc(&[1, 0, 1, 0], &[1, 0, 0, 1]).unwrap(), 0.0));
        let c = Confusion {
            tp: 2,
            tn: 3,
            fp: 1,
            fn_: 0,
        };
        // (2*3 - 1*0) / sqrt(3*2*4*3)
        assert!(close(c.mcc(), 6.0 / 72f64.sqrt()));
        assert!(close(mcc(&[1, 1, 1], &[1, 1, 0]).unwrap(), 0.0));
    }

    #[test]
    fn perfect_decisions() {
        let t = array![[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]];
        let r = evaluate(t.view(), t.view(), 0.5).unwrap();
        for v in [
            r.accuracy,
            r.precision,
            r.recall,
            r.f_score,
            r.mcc,
            r.auroc.unwrap(),
            r.auprc.unwrap(),
        ] {
            assert!(close(v, 1.0));
        }
        assert_eq!(r.headline().len(), 7);
        assert_eq!(r.per_group.len(), 3);
    }

    #[test]
    fn single_sample_by_hand() {
        let mut t = Array2::zeros((1, 20));
        t[[0, 0]] = 1.0;
        let mut s = Array2::zeros((1, 20));
        s[[0, 0]] = 0.9;
        s[[0, 1]] = 0.8;
        let r = evaluate(s.view(), t.view(), 0.5).unwrap();
        assert!(close(r.precision, 0.5));
        assert!(close(r.recall, 1.0));
        assert!(close(r.f_score, 2.0 / 3.0));
        assert!(close(r.accuracy, 19.0 / 20.0));
    }

    #[test]
    fn input_validation() {
        let a = Array2::<f64>::zeros((2, 3));
        let b = Array2::<f64>::zeros((3, 2));
        assert!(matches!(
            evaluate(a.view(), b.view(), 0.5),
            Err(EvalError::ShapeMismatch { .. })
        ));
        let t = array![[0.0, 0.5]];
        let s = array![[0.1, 0.2]];
        assert_eq!(evaluate(s.view(), t.view(), 0.5), Err(EvalError::NonBinaryTarget(0, 1)));
    }

    #[test]
    fn table_has_all_rows() {
        let t = array![[1.0, 0.0], [0.0, 1.0]];
        let table = evaluate(t.view(), t.view(), 0.5).unwrap().to_table();
        for name in METRIC_NAMES {
            assert!(table.contains(name));
        }
    }
}
