//! Prepared-dataset files.
//!
//! * `labeled_unfolded.csv`: `user_id,game_id,churn,survival,op_length,offset`,
//!   where `offset` indexes the first row of the user's window in
//!   `sequences.bin` (little-endian f64, 5 values per session row).
//! * `labeled_collapsed.csv`: the same keys followed by the mean and
//!   population std of each metric over the raw window and the one-hot
//!   context.
//! * `fit_meta.json`: thresholds, split plan, deployment feature fit and a
//!   sha256 digest of everything else in the file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::features::{collapse_rows, FeatureFit, N_METRICS};
use super::{PrepConfig, PreparedDataset, SplitPlan, UserExample};
use crate::error::{Error, Result};
use crate::telemetry::METRIC_NAMES;

pub const UNFOLDED_FILE: &str = "labeled_unfolded.csv";
pub const COLLAPSED_FILE: &str = "labeled_collapsed.csv";
pub const SEQUENCES_FILE: &str = "sequences.bin";
pub const FIT_META_FILE: &str = "fit_meta.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRecord {
    pub n_gaps: usize,
    pub mean: f64,
    pub std: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub build: String,
    pub seed: u64,
    pub config: PrepConfig,
    pub n_games: usize,
    pub game_names: BTreeMap<usize, String>,
    pub raw_users: usize,
    pub filtered_users: usize,
    pub thresholds: BTreeMap<usize, ThresholdRecord>,
    pub plan: SplitPlan,
    /// Quartiles and `max_len` over every prepared example, used when
    /// scoring new users with a model trained on the whole dataset.
    pub deployment_fit: FeatureFit,
    pub digest: String,
}

impl FitMeta {
    pub fn compute_digest(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.digest.clear();
        let bytes = serde_json::to_vec(&copy)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn verify(&self) -> Result<()> {
        let d = self.compute_digest()?;
        if d != self.digest {
            return Err(Error::Checkpoint(format!(
                "fit metadata digest {} does not match its contents ({d})",
                self.digest
            )));
        }
        Ok(())
    }
}

pub fn build_fit_meta(
    data: &PreparedDataset,
    config: &PrepConfig,
    seed: u64,
    game_names: &BTreeMap<usize, String>,
) -> Result<FitMeta> {
    let all: Vec<&UserExample> = data.examples.iter().collect();
    let mut meta = FitMeta {
        build: crate::BUILD_ID.to_string(),
        seed,
        config: config.clone(),
        n_games: data.n_games,
        game_names: game_names.clone(),
        raw_users: data.raw_users,
        filtered_users: data.filtered_users,
        thresholds: data.thresholds.clone(),
        plan: data.plan.clone(),
        deployment_fit: FeatureFit::fit(&all, data.n_games)?,
        digest: String::new(),
    };
    meta.digest = meta.compute_digest()?;
    Ok(meta)
}

fn bool_field(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Writes the three dataset files and returns the fit metadata.
pub fn write_prepared(
    data: &PreparedDataset,
    config: &PrepConfig,
    seed: u64,
    game_names: &BTreeMap<usize, String>,
    dir: &Path,
) -> Result<FitMeta> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let unfolded_path = dir.join(UNFOLDED_FILE);
    let mut unfolded = csv::Writer::from_path(&unfolded_path)?;
    unfolded.write_record(["user_id", "game_id", "churn", "survival", "op_length", "offset"])?;
    let collapsed_path = dir.join(COLLAPSED_FILE);
    let mut collapsed = csv::Writer::from_path(&collapsed_path)?;
    let mut header: Vec<String> = ["user_id", "game_id", "churn", "survival", "op_length"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for m in METRIC_NAMES {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    header.extend((0..data.n_games).map(|g| format!("ctx_{g}")));
    collapsed.write_record(&header)?;

    let mut blob = Vec::new();
    let mut offset = 0usize;
    for ex in &data.examples {
        let keys = [
            ex.user_id.clone(),
            ex.game_id.to_string(),
            bool_field(ex.churn).to_string(),
            ex.survival.to_string(),
            ex.op_length.to_string(),
        ];
        let mut row = keys.to_vec();
        row.push(offset.to_string());
        unfolded.write_record(&row)?;
        for r in &ex.window {
            for v in r {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        offset += ex.window.len();
        let mut crow = keys.to_vec();
        crow.extend(
            collapse_rows(&ex.window, ex.game_id, data.n_games)?
                .iter()
                .map(f64::to_string),
        );
        collapsed.write_record(&crow)?;
    }
    unfolded.flush().map_err(|e| Error::io(&unfolded_path, e))?;
    collapsed.flush().map_err(|e| Error::io(&collapsed_path, e))?;
    let seq_path = dir.join(SEQUENCES_FILE);
    fs::write(&seq_path, blob).map_err(|e| Error::io(&seq_path, e))?;

    let meta = build_fit_meta(data, config, seed, game_names)?;
    let meta_path = dir.join(FIT_META_FILE);
    let mut bytes = serde_json::to_vec_pretty(&meta)?;
    bytes.push(b'\n');
    fs::write(&meta_path, bytes).map_err(|e| Error::io(&meta_path, e))?;
    Ok(meta)
}

pub fn load_fit_meta(dir: &Path) -> Result<FitMeta> {
    let path = dir.join(FIT_META_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let meta: FitMeta = serde_json::from_slice(&bytes)?;
    meta.verify()?;
    Ok(meta)
}

#[derive(Debug, Deserialize)]
struct UnfoldedRow {
    user_id: String,
    game_id: usize,
    churn: u8,
    survival: f64,
    op_length: usize,
    offset: usize,
}

/// Reads a directory written by [`write_prepared`].
pub fn load_prepared(dir: &Path) -> Result<(PreparedDataset, FitMeta)> {
    let meta = load_fit_meta(dir)?;
    let seq_path = dir.join(SEQUENCES_FILE);
    let blob = fs::read(&seq_path).map_err(|e| Error::io(&seq_path, e))?;
    if blob.len() % (8 * N_METRICS) != 0 {
        return Err(Error::Format {
            path: seq_path,
            reason: format!("length {} is not a whole number of session rows", blob.len()),
        });
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let n_rows = values.len() / N_METRICS;
    let path = dir.join(UNFOLDED_FILE);
    let mut reader = csv::Reader::from_path(&path)?;
    let mut examples = Vec::new();
    for rec in reader.deserialize() {
        let row: UnfoldedRow = rec?;
        let bad = |reason: String| Error::Format {
            path: path.clone(),
            reason,
        };
        if row.op_length == 0 || row.offset + row.op_length > n_rows {
            return Err(bad(format!("window of {} out of range", row.user_id)));
        }
        if row.churn > 1 || row.game_id >= meta.n_games || row.survival.is_nan() || row.survival < 0.0 {
            return Err(bad(format!("invalid targets for {}", row.user_id)));
        }
        let window = (row.offset..row.offset + row.op_length)
            .map(|r| {
                let mut out = [0.0; N_METRICS];
                out.copy_from_slice(&values[r * N_METRICS..(r + 1) * N_METRICS]);
                out
            })
            .collect();
        examples.push(UserExample {
            user_id: row.user_id,
            game_id: row.game_id,
            churn: row.churn == 1,
            survival: row.survival,
            op_length: row.op_length,
            window,
        });
    }
    let data = PreparedDataset {
        examples,
        thresholds: meta.thresholds.clone(),
        plan: meta.plan.clone(),
        n_games: meta.n_games,
        raw_users: meta.raw_users,
        filtered_users: meta.filtered_users,
    };
    Ok((data, meta))
}
