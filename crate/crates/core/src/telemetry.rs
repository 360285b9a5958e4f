//! Synthetic session telemetry.
//!
//! Each simulated user carries a latent engagement scalar in `(0, 1]`.
//! After every session it is multiplied by a per-user decay drawn from the
//! profile's range, with a multiplicative reward perturbation whose size
//! grows with `reward_signal_strength`. Observed metrics scale with a
//! blend of the latent scalar and a constant level; the blend weight is
//! the reward signal strength, so at strength 1 behaviour reveals the
//! latent state fully and at strength 0 not at all. A user stops when the
//! latent drops below [`LATENT_FLOOR`], reaches `max_sessions`, or would
//! start a session after the data snapshot. Cumulative steady play is the
//! running sum of the latent scalar over sessions; reaching
//! `completion_sessions` marks the game as completed, after which the
//! latent decays faster by [`POST_COMPLETION_DECAY`] per session.
//!
//! Each user also has a diversity propensity, the expected share of
//! distinct activities per session. Users near [`FLOW_OPTIMUM`] draw their
//! decay from the slow end of the range and users at either extreme from
//! the fast end, so retention is non-monotone in observed diversity.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Binomial, Distribution, LogNormal, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Users quit once their latent engagement falls below this value.
pub const LATENT_FLOOR: f64 = 0.01;

/// Range of the per-user share of distinct activities.
pub const DIVERSITY_PROPENSITY_RANGE: (f64, f64) = (0.1, 0.7);

/// Diversity propensity at which a user decays slowest.
pub const FLOW_OPTIMUM: f64 = 0.4;

/// Share of the decay draw set by the squared distance of the diversity
/// propensity from [`FLOW_OPTIMUM`]; the rest is uniform.
pub const FLOW_WEIGHT: f64 = 0.6;

/// Extra per-session decay applied once a user has completed the game.
pub const POST_COMPLETION_DECAY: f64 = 0.6;

/// Header of the flat session file.
pub const SESSION_COLUMNS: [&str; 9] = [
    "user_id",
    "game_id",
    "session_index",
    "session_start",
    "session_time",
    "play_time",
    "delta_session",
    "activity_index",
    "activity_diversity",
];

pub const SESSIONS_FILE: &str = "sessions.csv";
pub const SESSIONS_META_FILE: &str = "sessions.meta.json";

const MINUTES_PER_DAY: f64 = 1440.0;

fn default_acquisition_days() -> f64 {
    90.0
}

fn default_snapshot_day() -> f64 {
    180.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameProfile {
    pub game_id: usize,
    pub name: String,
    pub mean_session_minutes: f64,
    pub session_time_dispersion: f64,
    pub mean_intersession_minutes: f64,
    pub completion_sessions: u32,
    pub engagement_decay_range: (f64, f64),
    pub reward_signal_strength: f64,
    pub max_sessions: u32,
    /// First sessions are spread uniformly over this many days.
    #[serde(default = "default_acquisition_days")]
    pub acquisition_days: f64,
    /// Day (from release) at which data collection stops.
    #[serde(default = "default_snapshot_day")]
    pub snapshot_day: f64,
}

impl GameProfile {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mean_session_minutes", self.mean_session_minutes),
            ("session_time_dispersion", self.session_time_dispersion),
            ("mean_intersession_minutes", self.mean_intersession_minutes),
            ("acquisition_days", self.acquisition_days),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{}: {name} must be positive", self.name)));
            }
        }
        let (lo, hi) = self.engagement_decay_range;
        if !(lo > 0.0 && hi < 1.0 && lo <= hi) {
            return Err(Error::invalid(format!(
                "{}: engagement_decay_range must satisfy 0 < low <= high < 1",
                self.name
            )));
        }
        if !(0.0..=1.0).contains(&self.reward_signal_strength) {
            return Err(Error::invalid(format!(
                "{}: reward_signal_strength must lie in [0, 1]",
                self.name
            )));
        }
        if self.completion_sessions == 0 || self.max_sessions == 0 {
            return Err(Error::invalid(format!(
                "{}: completion_sessions and max_sessions must be positive",
                self.name
            )));
        }
        if self.snapshot_day <= self.acquisition_days {
            return Err(Error::invalid(format!(
                "{}: snapshot_day must come after the acquisition window",
                self.name
            )));
        }
        Ok(())
    }

    pub fn snapshot_time(&self) -> f64 {
        self.snapshot_day * MINUTES_PER_DAY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub user_id: String,
    pub game_id: usize,
    pub session_index: usize,
    pub session_start: f64,
    pub session_time: f64,
    pub play_time: f64,
    pub delta_session: f64,
    pub activity_index: u64,
    pub activity_diversity: u64,
}

impl SessionRecord {
    pub fn end(&self) -> f64 {
        self.session_start + self.session_time
    }

    /// The five behavioural metrics in canonical order.
    pub fn metrics(&self) -> [f64; 5] {
        [
            self.session_time,
            self.play_time,
            self.delta_session,
            self.activity_index as f64,
            self.activity_diversity as f64,
        ]
    }
}

pub const METRIC_NAMES: [&str; 5] = [
    "session_time",
    "play_time",
    "delta_session",
    "activity_index",
    "activity_diversity",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerHistory {
    pub user_id: String,
    pub game_id: usize,
    pub sessions: Vec<SessionRecord>,
    pub completed_game: bool,
    pub completion_session_index: Option<usize>,
    pub snapshot_time: f64,
}

impl PlayerHistory {
    pub fn last_session_end(&self) -> f64 {
        self.sessions.last().map_or(0.0, SessionRecord::end)
    }

    /// Checks the record invariants of every session and of the history.
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::invalid(format!("user {}: {reason}", self.user_id));
        if self.sessions.is_empty() {
            return Err(bad("no sessions".into()));
        }
        let mut prev_start = f64::NEG_INFINITY;
        for (i, s) in self.sessions.iter().enumerate() {
            if s.user_id != self.user_id || s.game_id != self.game_id {
                return Err(bad(format!("session {i} belongs to another user or game")));
            }
            if s.session_index != i {
                return Err(bad(format!("session index {} at position {i}", s.session_index)));
            }
            if s.session_start < prev_start {
                return Err(bad(format!("session {i} starts before its predecessor")));
            }
            prev_start = s.session_start;
            let non_negative = s.session_time >= 0.0 && s.play_time >= 0.0 && s.delta_session >= 0.0;
            if !non_negative || s.play_time > s.session_time {
                return Err(bad(format!("session {i} has inconsistent durations")));
            }
            if s.activity_diversity > s.activity_index {
                return Err(bad(format!("session {i} has diversity above activity")));
            }
            if i == 0 && s.delta_session != 0.0 {
                return Err(bad("first session has a non-zero delta".into()));
            }
        }
        match (self.completed_game, self.completion_session_index) {
            (true, Some(k)) if k < self.sessions.len() => {}
            (false, None) => {}
            _ => return Err(bad("completion flag and index disagree".into())),
        }
        if self.snapshot_time < self.last_session_end() {
            return Err(bad("snapshot precedes the last session end".into()));
        }
        Ok(())
    }
}

/// The hidden state behind one generated history.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrace {
    pub user_id: String,
    pub initial_engagement: f64,
    pub decay: f64,
    pub diversity_propensity: f64,
    /// Latent value in force during each recorded session.
    pub trajectory: Vec<f64>,
}

fn round_minutes(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

pub fn user_id_for(game_id: usize, index: usize) -> String {
    format!("g{game_id:02}-u{index:07}")
}

fn simulate_user(profile: &GameProfile, index: usize, seed: u64) -> Option<(PlayerHistory, LatentTrace)> {
    let mut rng = seed::rng_for(seed, "synth-user", &[profile.game_id as u64, index as u64]);
    let user_id = user_id_for(profile.game_id, index);
    let s = profile.reward_signal_strength;
    let (lo, hi) = profile.engagement_decay_range;
    let initial: f64 = 1.0 - rng.random::<f64>() * 0.5;
    let (d_lo, d_hi) = DIVERSITY_PROPENSITY_RANGE;
    let propensity = rng.random_range(d_lo..=d_hi);
    let mismatch = ((propensity - FLOW_OPTIMUM) / ((d_hi - d_lo) / 2.0)).powi(2).min(1.0);
    let position = (1.0 - FLOW_WEIGHT) * rng.random::<f64>() + FLOW_WEIGHT * (1.0 - mismatch);
    let decay = lo + (hi - lo) * position;
    let snapshot = profile.snapshot_time();

    let session_noise = LogNormal::new(0.0, profile.session_time_dispersion).expect("dispersion validated");
    let gap_noise = LogNormal::new(0.0, 0.6).expect("constant");
    let play_noise = Normal::new(0.0, 0.05).expect("constant");

    let mut latent = initial;
    let mut clock = rng.random::<f64>() * profile.acquisition_days * MINUTES_PER_DAY;
    let mut sessions = Vec::new();
    let mut trajectory = Vec::new();
    let mut progress = 0.0;
    let mut completion = None;

    for k in 0..profile.max_sessions as usize {
        if latent < LATENT_FLOOR {
            break;
        }
        let level = (1.0 - s) * 0.6 + s * latent;
        let gap = if k == 0 {
            0.0
        } else {
            round_minutes(profile.mean_intersession_minutes * gap_noise.sample(&mut rng) / (0.25 + level))
        };
        let start = round_minutes(clock + gap);
        let session_time =
            round_minutes((profile.mean_session_minutes * (0.2 + level) * session_noise.sample(&mut rng)).max(0.5));
        let frac = (0.35 + 0.6 * level + play_noise.sample(&mut rng)).clamp(0.05, 1.0);
        let play_time = round_minutes(session_time * frac).min(session_time);
        let rate = play_time * (0.5 + level);
        let activity_index = if rate > 0.0 {
            Poisson::new(rate).expect("positive rate").sample(&mut rng) as u64
        } else {
            0
        };
        let p_unique = (propensity * (0.6 + 0.4 * level)).clamp(0.0, 1.0);
        let activity_diversity = Binomial::new(activity_index, p_unique)
            .expect("valid binomial")
            .sample(&mut rng);
        if start + session_time > snapshot {
            break;
        }
        sessions.push(SessionRecord {
            user_id: user_id.clone(),
            game_id: profile.game_id,
            session_index: k,
            session_start: start,
            session_time,
            play_time,
            delta_session: gap,
            activity_index,
            activity_diversity,
        });
        trajectory.push(latent);
        progress += latent;
        if completion.is_none() && progress >= f64::from(profile.completion_sessions) {
            completion = Some(k);
        }
        clock = start + session_time;
        let reward = rng.random_range(-1.0..=1.0);
        let after = if completion.is_some() {
            POST_COMPLETION_DECAY
        } else {
            1.0
        };
        latent = (latent * decay * after * (1.0 + 0.1 * s * reward)).min(1.0);
    }
    if sessions.is_empty() {
        return None;
    }
    let history = PlayerHistory {
        user_id: user_id.clone(),
        game_id: profile.game_id,
        sessions,
        completed_game: completion.is_some(),
        completion_session_index: completion,
        snapshot_time: snapshot,
    };
    let trace = LatentTrace {
        user_id,
        initial_engagement: initial,
        decay,
        diversity_propensity: propensity,
        trajectory,
    };
    Some((history, trace))
}

/// Generates `n_users` histories with their latent traces, ordered by user id.
///
/// Users whose first session would fall after the snapshot are dropped, so
/// the result can be shorter than `n_users`.
pub fn generate_population_traced(
    profile: &GameProfile,
    n_users: usize,
    seed: u64,
) -> Result<Vec<(PlayerHistory, LatentTrace)>> {
    if n_users == 0 {
        return Err(Error::invalid("n_users must be at least 1"));
    }
    profile.validate()?;
    let out: Vec<_> = (0..n_users)
        .into_par_iter()
        .filter_map(|i| simulate_user(profile, i, seed))
        .collect();
    Ok(out)
}

pub fn generate_population(profile: &GameProfile, n_users: usize, seed: u64) -> Result<Vec<PlayerHistory>> {
    Ok(generate_population_traced(profile, n_users, seed)?
        .into_iter()
        .map(|(h, _)| h)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameMeta {
    pub game_id: usize,
    pub name: String,
    pub snapshot_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserMeta {
    pub user_id: String,
    pub game_id: usize,
    pub completed_game: bool,
    pub completion_session_index: Option<usize>,
}

/// Sidecar describing the games and per-user completion state of a session file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionsMeta {
    pub build: String,
    pub games: Vec<GameMeta>,
    pub users: Vec<UserMeta>,
}

fn sorted_histories(histories: &[PlayerHistory]) -> Vec<&PlayerHistory> {
    let mut v: Vec<&PlayerHistory> = histories.iter().collect();
    v.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    v
}

/// Writes `sessions.csv` and its sidecar into `dir`; returns the row count.
pub fn emit_dataset(histories: &[PlayerHistory], names: &BTreeMap<usize, String>, dir: &Path) -> Result<usize> {
    if histories.is_empty() {
        return Err(Error::invalid("no histories to write"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join(SESSIONS_FILE);
    let file = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    // the header comes from the first serialized record
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut rows = 0;
    let mut games: BTreeMap<usize, GameMeta> = BTreeMap::new();
    let mut users = Vec::with_capacity(histories.len());
    for h in sorted_histories(histories) {
        h.validate()?;
        for s in &h.sessions {
            w.serialize(s)?;
            rows += 1;
        }
        let entry = games.entry(h.game_id).or_insert_with(|| GameMeta {
            game_id: h.game_id,
            name: names
                .get(&h.game_id)
                .cloned()
                .unwrap_or_else(|| format!("game{}", h.game_id)),
            snapshot_time: h.snapshot_time,
        });
        if entry.snapshot_time != h.snapshot_time {
            return Err(Error::invalid(format!(
                "game {} has conflicting snapshot times",
                h.game_id
            )));
        }
        users.push(UserMeta {
            user_id: h.user_id.clone(),
            game_id: h.game_id,
            completed_game: h.completed_game,
            completion_session_index: h.completion_session_index,
        });
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    let meta = SessionsMeta {
        build: crate::BUILD_ID.to_string(),
        games: games.into_values().collect(),
        users,
    };
    let meta_path = dir.join(SESSIONS_META_FILE);
    let mut f = fs::File::create(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let mut bytes = serde_json::to_vec_pretty(&meta)?;
    bytes.push(b'\n');
    f.write_all(&bytes).map_err(|e| Error::io(&meta_path, e))?;
    Ok(rows)
}

/// Reads a session file plus sidecar back into histories ordered by user id.
pub fn load_dataset(dir: &Path) -> Result<(Vec<PlayerHistory>, SessionsMeta)> {
    let meta_path = dir.join(SESSIONS_META_FILE);
    let meta_bytes = fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: SessionsMeta = serde_json::from_slice(&meta_bytes)?;
    let csv_path = dir.join(SESSIONS_FILE);
    let file = fs::File::open(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut r = csv::Reader::from_reader(std::io::BufReader::new(file));
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != SESSION_COLUMNS {
        return Err(format_error(&csv_path, format!("unexpected header {header:?}")));
    }
    let mut by_user: BTreeMap<String, Vec<SessionRecord>> = BTreeMap::new();
    for row in r.deserialize() {
        let s: SessionRecord = row?;
        by_user.entry(s.user_id.clone()).or_default().push(s);
    }
    let snapshots: BTreeMap<usize, f64> = meta.games.iter().map(|g| (g.game_id, g.snapshot_time)).collect();
    let mut histories = Vec::with_capacity(meta.users.len());
    for u in &meta.users {
        let sessions = by_user
            .remove(&u.user_id)
            .ok_or_else(|| format_error(&csv_path, format!("no sessions for user {}", u.user_id)))?;
        let snapshot_time = *snapshots
            .get(&u.game_id)
            .ok_or_else(|| format_error(&meta_path, format!("game {} missing", u.game_id)))?;
        let h = PlayerHistory {
            user_id: u.user_id.clone(),
            game_id: u.game_id,
            sessions,
            completed_game: u.completed_game,
            completion_session_index: u.completion_session_index,
            snapshot_time,
        };
        h.validate().map_err(|e| format_error(&csv_path, e.to_string()))?;
        histories.push(h);
    }
    if let Some(orphan) = by_user.keys().next() {
        return Err(format_error(&csv_path, format!("user {orphan} missing from sidecar")));
    }
    histories.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    Ok((histories, meta))
}

fn format_error(path: &Path, reason: String) -> Error {
    Error::Format {
        path: PathBuf::from(path),
        reason,
    }
}
