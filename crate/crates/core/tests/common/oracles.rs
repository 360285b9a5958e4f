//! Literal, loop-based restatements of the library formulas.

/// Smallest `k` with `3k >= min(S_t, S_c)`, found by counting up.
pub fn cutoff(total: usize, completion: Option<usize>) -> usize {
    let m = completion.map_or(total, |c| c.min(total));
    let mut k = 0;
    while 3 * k < m {
        k += 1;
    }
    k
}

/// Mean plus 2.5 population standard deviations, accumulated in two passes
/// with compensated summation.
pub fn inactivity_threshold(gaps: &[f64]) -> f64 {
    let n = gaps.len() as f64;
    let mean = kahan(gaps.iter().copied()) / n;
    let var = kahan(gaps.iter().map(|g| (g - mean).powi(2))) / n;
    mean + 2.5 * var.sqrt()
}

fn kahan(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Quantile at position `q (n - 1)` of the sorted values, interpolating
/// between the neighbouring order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut s = values.to_vec();
    // insertion sort keeps the oracle independent of the library's sort
    for i in 1..s.len() {
        let mut j = i;
        while j > 0 && s[j - 1] > s[j] {
            s.swap(j - 1, j);
            j -= 1;
        }
    }
    let pos = q * (s.len() as f64 - 1.0);
    let lo = pos.floor();
    let w = pos - lo;
    let lo = lo as usize;
    if w == 0.0 {
        s[lo]
    } else {
        s[lo] + w * (s[lo + 1] - s[lo])
    }
}

pub fn robust_rescale(values: &[f64]) -> Vec<f64> {
    let (q1, q2, q3) = (quantile(values, 0.25), quantile(values, 0.5), quantile(values, 0.75));
    let spread = if q3 == q1 { 1.0 } else { q3 - q1 };
    values.iter().map(|x| (x - q2) / spread).collect()
}

/// `Σ|ŷ - y| / (Σ(y + ŷ) + 1e-7)`.
pub fn smape(pred: &[f64], truth: &[f64]) -> f64 {
    let num = kahan(pred.iter().zip(truth).map(|(p, y)| (p - y).abs()));
    let den = kahan(pred.iter().zip(truth).map(|(p, y)| p + y));
    num / (den + 1e-7)
}

/// Per-class F1 from explicit TP/FP/FN tallies, averaged over both classes.
pub fn macro_f1(pred: &[bool], truth: &[bool]) -> f64 {
    let mut total = 0.0;
    for positive in [false, true] {
        let (mut tp, mut fp, mut fn_) = (0u32, 0u32, 0u32);
        for (&p, &t) in pred.iter().zip(truth) {
            match (p == positive, t == positive) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let f1 = if tp == 0 {
            0.0
        } else {
            let precision = f64::from(tp) / f64::from(tp + fp);
            let recall = f64::from(tp) / f64::from(tp + fn_);
            2.0 * precision * recall / (precision + recall)
        };
        total += f1;
    }
    total / 2.0
}

pub fn mse(pred: &[f64], truth: &[f64]) -> f64 {
    kahan(pred.iter().zip(truth).map(|(p, y)| (p - y) * (p - y))) / pred.len() as f64
}

/// Cross entropy with probabilities clipped to `[1e-7, 1 - 1e-7]`.
pub fn bce(pred: &[f64], truth: &[f64]) -> f64 {
    let terms = pred.iter().zip(truth).map(|(&p, &y)| {
        let p = p.clamp(1e-7, 1.0 - 1e-7);
        -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
    });
    kahan(terms) / pred.len() as f64
}

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
