//! Evaluation metrics: SMAPE, macro-F1 and the confusion matrix.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::loss;
use crate::error::{Error, Result};

/// Aggregate SMAPE, the same formula as the training loss.
pub fn smape_eval(pred: &[f64], truth: &[f64]) -> Result<f64> {
    loss::smape(pred, truth)
}

/// SMAPE after clamping negative predictions to 0; also returns the
/// number of clamped values.
pub fn smape_clamped(pred: &[f64], truth: &[f64]) -> Result<(f64, usize)> {
    let clamps = pred.iter().filter(|&&p| p < 0.0).count();
    if clamps > 0 {
        log::debug!("clamped {clamps} negative survival estimates to 0");
    }
    let clamped: Vec<f64> = pred.iter().map(|&p| p.max(0.0)).collect();
    Ok((loss::smape(&clamped, truth)?, clamps))
}

/// Raw counts indexed `[true class][predicted class]`, class 1 = churner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn from_labels(pred: &[bool], truth: &[bool]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::LengthMismatch {
                expected: truth.len(),
                actual: pred.len(),
            });
        }
        if pred.is_empty() {
            return Err(Error::invalid("confusion matrix of zero examples"));
        }
        let mut counts = [[0u64; 2]; 2];
        for (&p, &t) in pred.iter().zip(truth) {
            counts[usize::from(t)][usize::from(p)] += 1;
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Each true-class row divided by its total; empty rows stay zero.
    pub fn normalized(&self) -> [[f64; 2]; 2] {
        let mut out = [[0.0; 2]; 2];
        for (o, row) in out.iter_mut().zip(&self.counts) {
            let n = row[0] + row[1];
            if n > 0 {
                for (v, &c) in o.iter_mut().zip(row) {
                    *v = c as f64 / n as f64;
                }
            }
        }
        out
    }

    /// Precision, recall and F1 with `class` as the positive class.
    /// Undefined ratios are 0.
    pub fn class_scores(&self, class: usize) -> ClassScores {
        let other = 1 - class;
        let tp = self.counts[class][class] as f64;
        let fp = self.counts[other][class] as f64;
        let fn_ = self.counts[class][other] as f64;
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        ClassScores {
            precision,
            recall,
            f1: ratio(2.0 * precision * recall, precision + recall),
            support: self.counts[class][0] + self.counts[class][1],
        }
    }

    pub fn macro_f1(&self) -> f64 {
        (self.class_scores(0).f1 + self.class_scores(1).f1) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Unweighted mean of the per-class F1 scores.
pub fn macro_f1(pred: &[bool], truth: &[bool]) -> Result<f64> {
    Ok(ConfusionMatrix::from_labels(pred, truth)?.macro_f1())
}

pub fn confusion_matrix(pred: &[bool], truth: &[bool]) -> Result<([[f64; 2]; 2], ConfusionMatrix)> {
    let cm = ConfusionMatrix::from_labels(pred, truth)?;
    Ok((cm.normalized(), cm))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameReport {
    pub smape: f64,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub smape: f64,
    pub macro_f1: f64,
    /// `[non-churner, churner]`.
    pub per_class: [ClassScores; 2],
    pub confusion: ConfusionMatrix,
    pub clamped: usize,
    pub per_game: BTreeMap<usize, GameReport>,
}

/// Scores survival estimates and churn decisions overall and per game.
pub fn evaluate(
    games: &[usize],
    survival_pred: &[f64],
    survival_truth: &[f64],
    churn_pred: &[bool],
    churn_truth: &[bool],
) -> Result<EvalReport> {
    let n = games.len();
    for len in [
        survival_pred.len(),
        survival_truth.len(),
        churn_pred.len(),
        churn_truth.len(),
    ] {
        if len != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: len,
            });
        }
    }
    let (smape, clamped) = smape_clamped(survival_pred, survival_truth)?;
    let confusion = ConfusionMatrix::from_labels(churn_pred, churn_truth)?;
    let mut idx: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &g) in games.iter().enumerate() {
        idx.entry(g).or_default().push(i);
    }
    let mut per_game = BTreeMap::new();
    for (g, rows) in idx {
        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let pickb = |v: &[bool]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let (s, c) = smape_clamped(&pick(survival_pred), &pick(survival_truth))?;
        let cm = ConfusionMatrix::from_labels(&pickb(churn_pred), &pickb(churn_truth))?;
        per_game.insert(
            g,
            GameReport {
                smape: s,
                macro_f1: cm.macro_f1(),
                confusion: cm,
                clamped: c,
            },
        );
    }
    Ok(EvalReport {
        smape,
        macro_f1: confusion.macro_f1(),
        per_class: [confusion.class_scores(0), confusion.class_scores(1)],
        confusion,
        clamped,
        per_game,
    })
}
