//! Loss functions on plain slices.
//!
//! These are the reference implementations: the graph operations call them
//! for their forward value and the evaluation metrics reuse them directly.

use crate::error::{Error, Result};

/// Probability clip applied before taking logarithms in [`bce`].
pub const BCE_EPSILON: f64 = 1e-7;
/// Added to the SMAPE denominator.
pub const SMAPE_EPSILON: f64 = 1e-7;

fn check_lengths(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch {
            expected: target.len(),
            actual: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::invalid("loss over zero elements"));
    }
    Ok(())
}

/// Mean squared error `(1/N) Σ (y - ŷ)²`.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target)?;
    let sum: f64 = pred.iter().zip(target).map(|(p, y)| (y - p) * (y - p)).sum();
    Ok(sum / pred.len() as f64)
}

pub fn mse_grad(pred: &[f64], target: &[f64]) -> Vec<f64> {
    let n = pred.len() as f64;
    pred.iter().zip(target).map(|(p, y)| 2.0 * (p - y) / n).collect()
}

/// Binary cross entropy with predictions clipped to `[ε, 1-ε]`.
pub fn bce(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target)?;
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    Ok(-sum / pred.len() as f64)
}

/// Gradient of [`bce`]; zero where the clip is active.
pub fn bce_grad(pred: &[f64], target: &[f64]) -> Vec<f64> {
    let n = pred.len() as f64;
    pred.iter()
        .zip(target)
        .map(|(&p, &y)| {
            if !(BCE_EPSILON..=1.0 - BCE_EPSILON).contains(&p) {
                0.0
            } else {
                (-y / p + (1.0 - y) / (1.0 - p)) / n
            }
        })
        .collect()
}

/// Aggregate SMAPE: `Σ|ŷ - y| / (Σ(y + ŷ) + ε)`.
///
/// One ratio of sums, not a mean of per-element ratios.
pub fn smape(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target)?;
    let (num, den) = smape_parts(pred, target);
    Ok(num / den)
}

fn smape_parts(pred: &[f64], target: &[f64]) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = SMAPE_EPSILON;
    for (p, y) in pred.iter().zip(target) {
        num += (p - y).abs();
        den += y + p;
    }
    (num, den)
}

/// Gradient of [`smape`] with the subgradient at `ŷ = y` taken as zero.
pub fn smape_grad(pred: &[f64], target: &[f64]) -> Vec<f64> {
    let (num, den) = smape_parts(pred, target);
    let shared = num / (den * den);
    pred.iter()
        .zip(target)
        .map(|(p, y)| {
            let sign = if p > y {
                1.0
            } else if p < y {
                -1.0
            } else {
                0.0
            };
            sign / den - shared
        })
        .collect()
}
