//! Observation-period cut-off, churn labels, survival targets and outlier
//! filtering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::telemetry::{PlayerHistory, SessionRecord};

/// Number of leading sessions retained as the observation period:
/// `⌈min(S_t, S_c) / 3⌉`, with `S_c` treated as infinite when absent.
pub fn compute_cutoff(total_sessions: usize, completion_sessions: Option<usize>) -> Result<usize> {
    if total_sessions == 0 {
        return Err(Error::invalid("a user needs at least one session"));
    }
    let effective = match completion_sessions {
        Some(sc) if sc == 0 || sc > total_sessions => {
            return Err(Error::invalid(format!(
                "completion session count {sc} outside 1..={total_sessions}"
            )))
        }
        Some(sc) => sc,
        None => total_sessions,
    };
    Ok(effective.div_ceil(3))
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `mean(x) + 2.5 · std(x)` over every inter-session gap of one game.
pub fn compute_inactivity_threshold(gaps: &[f64]) -> Result<f64> {
    if gaps.len() < 2 {
        return Err(Error::invalid(format!(
            "inactivity threshold needs at least 2 gaps, got {}",
            gaps.len()
        )));
    }
    let (mean, std) = mean_std(gaps);
    Ok(mean + 2.5 * std)
}

/// Inter-session distances of a history (the first session has none).
pub fn intersession_gaps(history: &PlayerHistory) -> impl Iterator<Item = f64> + '_ {
    history.sessions.iter().skip(1).map(|s| s.delta_session)
}

/// A churner never completed the game and has been inactive at the
/// snapshot for at least `threshold` minutes (measured from the end of the
/// last session).
pub fn label_churn(history: &PlayerHistory, threshold: f64) -> bool {
    if history.completed_game {
        return false;
    }
    history.snapshot_time - history.last_session_end() >= threshold
}

/// The first `cutoff` sessions of one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationWindow {
    pub user_id: String,
    pub game_id: usize,
    pub cutoff: usize,
    pub sessions: Vec<SessionRecord>,
}

impl ObservationWindow {
    pub fn for_history(history: &PlayerHistory) -> Result<Self> {
        let s_c = history.completion_session_index.map(|k| k + 1);
        let cutoff = compute_cutoff(history.sessions.len(), s_c)?;
        Ok(ObservationWindow {
            user_id: history.user_id.clone(),
            game_id: history.game_id,
            cutoff,
            sessions: history.sessions[..cutoff].to_vec(),
        })
    }

    pub fn metric_rows(&self) -> Vec<[f64; 5]> {
        self.sessions.iter().map(SessionRecord::metrics).collect()
    }
}

/// Play time after the observation period.
pub fn compute_survival_target(history: &PlayerHistory, window: &ObservationWindow) -> Result<f64> {
    if history.user_id != window.user_id {
        return Err(Error::invalid(format!(
            "window of {} applied to history of {}",
            window.user_id, history.user_id
        )));
    }
    let total: f64 = history.sessions.iter().map(|s| s.play_time).sum();
    let observed: f64 = window.sessions.iter().map(|s| s.play_time).sum();
    Ok((total - observed).max(0.0))
}

/// Nearest-rank percentile: the value at 1-based rank `⌈p/100 · N⌉`.
pub fn nearest_rank_percentile(sorted: &[f64], percentile: f64) -> f64 {
    let n = sorted.len();
    let rank = ((percentile / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Drops users with any behavioural metric of any session strictly above
/// their game's `percentile` over all sessions of all its users.
pub fn filter_outlier_users(histories: &[PlayerHistory], percentile: f64) -> Vec<PlayerHistory> {
    let mut by_game: BTreeMap<usize, Vec<&PlayerHistory>> = BTreeMap::new();
    for h in histories {
        by_game.entry(h.game_id).or_default().push(h);
    }
    let mut limits: BTreeMap<usize, [f64; 5]> = BTreeMap::new();
    for (&game, users) in &by_game {
        if users.len() < 2 {
            continue;
        }
        let mut cols: [Vec<f64>; 5] = Default::default();
        for s in users.iter().flat_map(|h| &h.sessions) {
            for (c, v) in cols.iter_mut().zip(s.metrics()) {
                c.push(v);
            }
        }
        let mut lim = [f64::INFINITY; 5];
        for (l, c) in lim.iter_mut().zip(cols.iter_mut()) {
            c.sort_by(f64::total_cmp);
            *l = nearest_rank_percentile(c, percentile);
        }
        limits.insert(game, lim);
    }
    histories
        .iter()
        .filter(|h| match limits.get(&h.game_id) {
            None => true,
            Some(lim) => h
                .sessions
                .iter()
                .all(|s| s.metrics().iter().zip(lim).all(|(v, l)| v <= l)),
        })
        .cloned()
        .collect()
}
