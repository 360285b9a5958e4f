//! Stratified tuning/validation split and fold assignment.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::UserExample;
use crate::error::{Error, Result};
use crate::seed;

/// Minimum stratum size below which a warning is logged.
pub const MIN_STRATUM: usize = 10;

/// `(game_id, churn_label, op-length bucket)` with buckets 1, 2, 3 and 4+.
pub type StrataKey = (usize, bool, usize);

pub fn op_bucket(op_length: usize) -> usize {
    op_length.clamp(1, 4)
}

pub fn strata_key(ex: &UserExample) -> StrataKey {
    (ex.game_id, ex.churn, op_bucket(ex.op_length))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub n_folds: usize,
    pub tuning_ids: BTreeSet<String>,
    pub validation_ids: BTreeSet<String>,
    pub fold_assignments: BTreeMap<String, usize>,
}

impl SplitPlan {
    pub fn partition(&self, tuning: bool) -> &BTreeSet<String> {
        if tuning {
            &self.tuning_ids
        } else {
            &self.validation_ids
        }
    }

    /// `(train, test)` indices into `examples` for one fold of one partition.
    pub fn fold_indices(&self, examples: &[UserExample], tuning: bool, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let part = self.partition(tuning);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, ex) in examples.iter().enumerate() {
            if !part.contains(&ex.user_id) {
                continue;
            }
            if self.fold_assignments[&ex.user_id] == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }
}

/// Stratified shuffle split into tuning (`tuning_fraction`) and validation,
/// then `n_folds` folds inside each partition. Folds are dealt round-robin
/// per `(game, label)` while walking the strata in order, so every fold gets
/// near-equal class counts per game and a similar OP-length mix. Tuning
/// sizes are rounded per `(game, label)` group and spread over its strata by
/// largest remainder, so equal class sizes give equal tuning class sizes.
pub fn make_split_plan(
    examples: &[UserExample],
    seed_value: u64,
    tuning_fraction: f64,
    n_folds: usize,
) -> Result<SplitPlan> {
    if n_folds < 2 {
        return Err(Error::invalid("fold count must be at least 2"));
    }
    if !(0.0..1.0).contains(&tuning_fraction) || tuning_fraction == 0.0 {
        return Err(Error::invalid("tuning fraction must lie in (0, 1)"));
    }
    let mut strata: BTreeMap<StrataKey, Vec<&str>> = BTreeMap::new();
    for ex in examples {
        strata.entry(strata_key(ex)).or_default().push(&ex.user_id);
    }
    let n_tune = tuning_allocation(&strata, tuning_fraction);
    let mut tuning_ids = BTreeSet::new();
    let mut validation_ids = BTreeSet::new();
    let mut fold_assignments = BTreeMap::new();
    let mut counters: BTreeMap<(bool, usize, bool), usize> = BTreeMap::new();
    for (key, ids) in &mut strata {
        if ids.len() < MIN_STRATUM {
            log::warn!(
                "stratum game={} churn={} op_bucket={} has only {} examples",
                key.0,
                key.1,
                key.2,
                ids.len()
            );
        }
        ids.sort_unstable();
        let mut rng = seed::rng_for(seed_value, "split", &[key.0 as u64, u64::from(key.1), key.2 as u64]);
        ids.shuffle(&mut rng);
        let n_tune = n_tune[key];
        for (i, id) in ids.iter().enumerate() {
            let tuning = i < n_tune;
            let counter = counters.entry((tuning, key.0, key.1)).or_insert(0);
            fold_assignments.insert(id.to_string(), *counter % n_folds);
            *counter += 1;
            if tuning {
                tuning_ids.insert(id.to_string());
            } else {
                validation_ids.insert(id.to_string());
            }
        }
    }
    Ok(SplitPlan {
        seed: seed_value,
        n_folds,
        tuning_ids,
        validation_ids,
        fold_assignments,
    })
}

/// Tuning count per stratum: each `(game, label)` group receives
/// `round(fraction * size)` users, each stratum the floor of its share plus
/// one for the largest fractional parts (ties in stratum order).
fn tuning_allocation(strata: &BTreeMap<StrataKey, Vec<&str>>, fraction: f64) -> BTreeMap<StrataKey, usize> {
    let mut groups: BTreeMap<(usize, bool), Vec<(StrataKey, usize)>> = BTreeMap::new();
    for (key, ids) in strata {
        groups.entry((key.0, key.1)).or_default().push((*key, ids.len()));
    }
    let mut out = BTreeMap::new();
    for members in groups.values() {
        let total: usize = members.iter().map(|m| m.1).sum();
        let target = (fraction * total as f64).round() as usize;
        let mut shares: Vec<(StrataKey, usize, f64)> = members
            .iter()
            .map(|&(k, n)| {
                let exact = fraction * n as f64;
                (k, exact.floor() as usize, exact - exact.floor())
            })
            .collect();
        let assigned: usize = shares.iter().map(|s| s.1).sum();
        let mut order: Vec<usize> = (0..shares.len()).collect();
        order.sort_by(|&a, &b| shares[b].2.total_cmp(&shares[a].2).then(a.cmp(&b)));
        for &i in order.iter().take(target.saturating_sub(assigned)) {
            shares[i].1 += 1;
        }
        out.extend(shares.into_iter().map(|(k, n, _)| (k, n)));
    }
    out
}
