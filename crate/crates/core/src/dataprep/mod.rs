//! Labeling, observation windows, rescaling, splitting and the prepared
//! dataset files.

pub mod features;
pub mod io;
pub mod labels;
pub mod split;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use features::{
    collapse_features, collapse_rows, fit_quartiles, robust_rescale, unfold_and_pad, FeatureFit, PaddedSequence,
    Quartiles, N_METRICS,
};
pub use io::{load_fit_meta, load_prepared, write_prepared, FitMeta, ThresholdRecord};
pub use labels::{
    compute_cutoff, compute_inactivity_threshold, compute_survival_target, filter_outlier_users, label_churn, mean_std,
    ObservationWindow,
};
pub use split::{make_split_plan, op_bucket, strata_key, SplitPlan};

use crate::error::{Error, Result};
use crate::seed;
use crate::telemetry::PlayerHistory;

/// One user's observation window in raw metric units, with its targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserExample {
    pub user_id: String,
    pub game_id: usize,
    pub churn: bool,
    pub survival: f64,
    pub op_length: usize,
    /// `op_length` rows of the five behavioural metrics.
    pub window: Vec<[f64; N_METRICS]>,
}

impl UserExample {
    pub fn labeled(history: &PlayerHistory, threshold: f64) -> Result<Self> {
        let window = ObservationWindow::for_history(history)?;
        let survival = compute_survival_target(history, &window)?;
        Ok(UserExample {
            user_id: history.user_id.clone(),
            game_id: history.game_id,
            churn: label_churn(history, threshold),
            survival,
            op_length: window.cutoff,
            window: window.metric_rows(),
        })
    }

    /// Window only; targets are unknown and left at `false` / 0.
    pub fn unlabeled(history: &PlayerHistory) -> Result<Self> {
        let window = ObservationWindow::for_history(history)?;
        Ok(UserExample {
            user_id: history.user_id.clone(),
            game_id: history.game_id,
            churn: false,
            survival: 0.0,
            op_length: window.cutoff,
            window: window.metric_rows(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepConfig {
    pub outlier_percentile: f64,
    /// Users kept per class per game after balancing; `None` keeps the
    /// size of the minority class.
    pub per_class: Option<usize>,
    pub tuning_fraction: f64,
    pub n_folds: usize,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            outlier_percentile: 99.0,
            per_class: Some(1000),
            tuning_fraction: 0.2,
            n_folds: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDataset {
    /// Sorted by user id.
    pub examples: Vec<UserExample>,
    pub thresholds: BTreeMap<usize, ThresholdRecord>,
    pub plan: SplitPlan,
    pub n_games: usize,
    pub raw_users: usize,
    pub filtered_users: usize,
}

impl PreparedDataset {
    pub fn select(&self, idx: &[usize]) -> Vec<&UserExample> {
        idx.iter().map(|&i| &self.examples[i]).collect()
    }
}

/// Inactivity thresholds per game over every gap of the given population.
pub fn game_thresholds(histories: &[PlayerHistory]) -> Result<BTreeMap<usize, ThresholdRecord>> {
    let mut gaps: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for h in histories {
        gaps.entry(h.game_id).or_default().extend(labels::intersession_gaps(h));
    }
    gaps.into_iter()
        .map(|(g, v)| {
            let threshold = compute_inactivity_threshold(&v)?;
            let (mean, std) = mean_std(&v);
            Ok((
                g,
                ThresholdRecord {
                    n_gaps: v.len(),
                    mean,
                    std,
                    threshold,
                },
            ))
        })
        .collect()
}

/// Down-samples each game to equal churner / non-churner counts.
pub fn balance_classes(examples: Vec<UserExample>, per_class: Option<usize>, seed_value: u64) -> Vec<UserExample> {
    let mut groups: BTreeMap<(usize, bool), Vec<UserExample>> = BTreeMap::new();
    for ex in examples {
        groups.entry((ex.game_id, ex.churn)).or_default().push(ex);
    }
    let games: Vec<usize> = groups
        .keys()
        .map(|k| k.0)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut out = Vec::new();
    for g in games {
        let n_pos = groups.get(&(g, true)).map_or(0, Vec::len);
        let n_neg = groups.get(&(g, false)).map_or(0, Vec::len);
        let mut keep = n_pos.min(n_neg);
        if let Some(cap) = per_class {
            if keep < cap {
                log::warn!("game {g}: only {keep} users per class available (requested {cap})");
            }
            keep = keep.min(cap);
        }
        for label in [false, true] {
            let Some(mut group) = groups.remove(&(g, label)) else {
                continue;
            };
            group.sort_by(|a, b| a.user_id.cmp(&b.user_id));
            let mut rng = seed::rng_for(seed_value, "balance", &[g as u64, u64::from(label)]);
            group.shuffle(&mut rng);
            group.truncate(keep);
            out.extend(group);
        }
    }
    out.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    out
}

/// Outlier filter, labels, targets, class balancing and the split plan.
pub fn prepare(
    histories: &[PlayerHistory],
    n_games: usize,
    config: &PrepConfig,
    seed_value: u64,
) -> Result<PreparedDataset> {
    if histories.is_empty() {
        return Err(Error::invalid("no player histories to prepare"));
    }
    if let Some(h) = histories.iter().find(|h| h.game_id >= n_games) {
        return Err(Error::UnknownContext {
            game_id: h.game_id,
            known: n_games,
        });
    }
    let filtered = filter_outlier_users(histories, config.outlier_percentile);
    if filtered.is_empty() {
        return Err(Error::invalid("outlier filter removed every user"));
    }
    let thresholds = game_thresholds(&filtered)?;
    let labeled = filtered
        .iter()
        .map(|h| UserExample::labeled(h, thresholds[&h.game_id].threshold))
        .collect::<Result<Vec<_>>>()?;
    let examples = balance_classes(labeled, config.per_class, seed_value);
    if examples.is_empty() {
        return Err(Error::invalid("class balancing left no examples"));
    }
    let plan = make_split_plan(
        &examples,
        seed::derive(seed_value, "split", &[]),
        config.tuning_fraction,
        config.n_folds,
    )?;
    Ok(PreparedDataset {
        examples,
        thresholds,
        plan,
        n_games,
        raw_users: histories.len(),
        filtered_users: filtered.len(),
    })
}
