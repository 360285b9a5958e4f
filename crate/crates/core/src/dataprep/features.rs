//! Per-game robust rescaling and the collapsed / unfolded feature formats.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::labels::{mean_std, ObservationWindow};
use super::UserExample;
use crate::error::{Error, Result};

pub const N_METRICS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

impl Quartiles {
    /// `Q3 - Q1`, or 1 when the spread is zero.
    pub fn scale(&self) -> f64 {
        let iqr = self.q3 - self.q1;
        if iqr == 0.0 {
            1.0
        } else {
            iqr
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.q2) / self.scale()
    }
}

/// Quantile by linear interpolation between closest ranks (position `q·(n-1)`).
pub fn interpolated_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn fit_quartiles(values: &[f64]) -> Result<Quartiles> {
    if values.len() < 4 {
        return Err(Error::invalid(format!(
            "quartiles need at least 4 values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("quartile input".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Quartiles {
        q1: interpolated_quantile(&sorted, 0.25),
        q2: interpolated_quantile(&sorted, 0.5),
        q3: interpolated_quantile(&sorted, 0.75),
    })
}

/// `(x - Q2) / (Q3 - Q1)`, fitting the quartiles unless `fit` is supplied.
pub fn robust_rescale(values: &[f64], fit: Option<Quartiles>) -> Result<(Vec<f64>, Quartiles)> {
    let q = match fit {
        Some(q) => q,
        None => fit_quartiles(values)?,
    };
    Ok((values.iter().map(|&x| q.apply(x)).collect(), q))
}

/// Mean and population std of each metric followed by a one-hot context.
pub fn collapse_rows(rows: &[[f64; N_METRICS]], game_id: usize, n_games: usize) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::invalid("cannot collapse an empty window"));
    }
    if game_id >= n_games {
        return Err(Error::UnknownContext {
            game_id,
            known: n_games,
        });
    }
    let mut out = Vec::with_capacity(2 * N_METRICS + n_games);
    for m in 0..N_METRICS {
        let col: Vec<f64> = rows.iter().map(|r| r[m]).collect();
        let (mean, std) = mean_std(&col);
        out.push(mean);
        out.push(std);
    }
    out.extend((0..n_games).map(|g| if g == game_id { 1.0 } else { 0.0 }));
    Ok(out)
}

pub fn collapse_features(window: &ObservationWindow, n_games: usize) -> Result<Vec<f64>> {
    collapse_rows(&window.metric_rows(), window.game_id, n_games)
}

/// Zero-padded `max_len × 5` matrix plus its mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedSequence {
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl PaddedSequence {
    pub fn valid_len(&self) -> usize {
        self.mask.iter().take_while(|&&m| m).count()
    }
}

/// Post-pads each window to `max_len` rows (default: the longest window).
/// Longer windows keep their last `max_len` sessions.
pub fn pad_rows(windows: &[Vec<[f64; N_METRICS]>], max_len: Option<usize>) -> Result<Vec<PaddedSequence>> {
    if windows.is_empty() {
        return Err(Error::invalid("no windows to pad"));
    }
    let max_len = max_len.unwrap_or_else(|| windows.iter().map(Vec::len).max().unwrap_or(1));
    if max_len == 0 {
        return Err(Error::invalid("max_len must be positive"));
    }
    windows
        .iter()
        .map(|rows| {
            if rows.is_empty() {
                return Err(Error::invalid("empty window"));
            }
            let keep = &rows[rows.len().saturating_sub(max_len)..];
            let mut values = vec![0.0; max_len * N_METRICS];
            for (i, r) in keep.iter().enumerate() {
                values[i * N_METRICS..(i + 1) * N_METRICS].copy_from_slice(r);
            }
            let mask = (0..max_len).map(|i| i < keep.len()).collect();
            Ok(PaddedSequence { values, mask })
        })
        .collect()
}

pub fn unfold_and_pad(windows: &[ObservationWindow], max_len: Option<usize>) -> Result<Vec<PaddedSequence>> {
    let rows: Vec<_> = windows.iter().map(ObservationWindow::metric_rows).collect();
    pad_rows(&rows, max_len)
}

/// Statistics fitted on a set of training users: quartiles per game and
/// metric over their observation-window sessions, plus the padding length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFit {
    pub n_games: usize,
    /// `quartiles[game_id][metric]`.
    pub quartiles: BTreeMap<usize, [Quartiles; N_METRICS]>,
    pub max_len: usize,
    pub training_ids: Vec<String>,
}

impl FeatureFit {
    pub fn fit(train: &[&UserExample], n_games: usize) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::invalid("cannot fit features on zero examples"));
        }
        let mut per_game: BTreeMap<usize, [Vec<f64>; N_METRICS]> = BTreeMap::new();
        for ex in train {
            let cols = per_game.entry(ex.game_id).or_default();
            for row in &ex.window {
                for (c, v) in cols.iter_mut().zip(row) {
                    c.push(*v);
                }
            }
        }
        let mut quartiles = BTreeMap::new();
        for (game, cols) in per_game {
            let mut qs = [Quartiles {
                q1: 0.0,
                q2: 0.0,
                q3: 1.0,
            }; N_METRICS];
            for (q, c) in qs.iter_mut().zip(&cols) {
                *q = fit_quartiles(c)?;
            }
            quartiles.insert(game, qs);
        }
        let max_len = train.iter().map(|e| e.window.len()).max().unwrap_or(1);
        let ids: BTreeSet<String> = train.iter().map(|e| e.user_id.clone()).collect();
        Ok(FeatureFit {
            n_games,
            quartiles,
            max_len,
            training_ids: ids.into_iter().collect(),
        })
    }

    pub fn rescale_window(&self, ex: &UserExample) -> Result<Vec<[f64; N_METRICS]>> {
        let qs = self.quartiles.get(&ex.game_id).ok_or(Error::UnknownContext {
            game_id: ex.game_id,
            known: self.n_games,
        })?;
        Ok(ex
            .window
            .iter()
            .map(|row| {
                let mut out = [0.0; N_METRICS];
                for m in 0..N_METRICS {
                    out[m] = qs[m].apply(row[m]);
                }
                out
            })
            .collect())
    }

    pub fn collapsed(&self, ex: &UserExample) -> Result<Vec<f64>> {
        collapse_rows(&self.rescale_window(ex)?, ex.game_id, self.n_games)
    }

    pub fn padded(&self, ex: &UserExample) -> Result<PaddedSequence> {
        let rows = self.rescale_window(ex)?;
        Ok(pad_rows(&[rows], Some(self.max_len))?.remove(0))
    }

    /// Padded sequence flattened row-major, then the one-hot context.
    pub fn flattened(&self, ex: &UserExample) -> Result<Vec<f64>> {
        let mut v = self.padded(ex)?.values;
        v.extend((0..self.n_games).map(|g| if g == ex.game_id { 1.0 } else { 0.0 }));
        Ok(v)
    }

    pub fn collapsed_width(&self) -> usize {
        2 * N_METRICS + self.n_games
    }

    pub fn flattened_width(&self) -> usize {
        self.max_len * N_METRICS + self.n_games
    }
}
