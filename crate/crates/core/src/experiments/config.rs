//! Pipeline configuration file (TOML).
//!
//! ```toml
//! seed = 7                      # root of every derived random stream
//! [synth]
//! users_per_game = 5000         # simulated users per game
//! [[synth.games]]               # one table per game profile
//! game_id = 0
//! name = "mobile-a"
//! ...
//! [prep]                        # outlier percentile, users per class, split
//! [experiments]
//! run = [1, 2, 3]               # experiments executed by `evaluate`
//! mc_samples = 50
//! [grids]                       # hyper-parameter grids searched on tuning folds
//! [training]                    # layer widths and epoch caps
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataprep::PrepConfig;
use crate::error::{Error, Result};
use crate::models::{BmConfig, MlpConfig};
use crate::telemetry::GameProfile;

pub const DEFAULT_CONFIG: &str = include_str!("../../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub users_per_game: usize,
    pub games: Vec<GameProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSettings {
    pub run: Vec<u8>,
    pub mc_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    pub en_alpha: Vec<f64>,
    pub en_l1_ratio: Vec<f64>,
    pub lr_c: Vec<f64>,
    pub mlp_l2: Vec<f64>,
    pub bm_dropout: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSettings {
    pub mlp_hidden: Vec<usize>,
    pub mlp_max_epochs: usize,
    pub bm_embedding_dim: usize,
    pub bm_fusion_dim: usize,
    pub bm_lstm_units: usize,
    pub bm_head_units: usize,
    pub bm_max_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub prep: PrepConfig,
    pub experiments: ExperimentSettings,
    pub grids: Grids,
    pub training: TrainingSettings,
}

impl PipelineConfig {
    pub fn default_config() -> Self {
        Self::from_toml(DEFAULT_CONFIG).expect("bundled default configuration is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `"default"` selects the bundled configuration.
    pub fn load(path_or_default: &str) -> Result<Self> {
        if path_or_default == "default" {
            return Ok(Self::default_config());
        }
        let path = Path::new(path_or_default);
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.synth.games.is_empty() {
            return Err(Error::invalid("config lists no games"));
        }
        if self.synth.users_per_game == 0 {
            return Err(Error::invalid("users_per_game must be positive"));
        }
        for (i, g) in self.synth.games.iter().enumerate() {
            g.validate()?;
            if g.game_id != i {
                return Err(Error::invalid(format!(
                    "game ids must be 0..n in order; entry {i} has id {}",
                    g.game_id
                )));
            }
        }
        if self.prep.n_folds < 2 {
            return Err(Error::invalid("fold count must be at least 2"));
        }
        if self.experiments.run.iter().any(|e| !(1..=3).contains(e)) {
            return Err(Error::invalid("experiments are numbered 1 to 3"));
        }
        if self.experiments.mc_samples == 0 {
            return Err(Error::invalid("mc_samples must be positive"));
        }
        let g = &self.grids;
        for (name, grid) in [
            ("en_alpha", &g.en_alpha),
            ("en_l1_ratio", &g.en_l1_ratio),
            ("lr_c", &g.lr_c),
            ("mlp_l2", &g.mlp_l2),
            ("bm_dropout", &g.bm_dropout),
        ] {
            if grid.is_empty() {
                return Err(Error::invalid(format!("grid {name} is empty")));
            }
            if grid.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::invalid(format!(
                    "grid {name} has a negative or non-finite value"
                )));
            }
        }
        if g.en_l1_ratio.iter().any(|&r| r > 1.0) || g.bm_dropout.iter().any(|&r| r >= 1.0) {
            return Err(Error::invalid("l1 ratios must be <= 1 and dropout rates < 1"));
        }
        if g.lr_c.contains(&0.0) {
            return Err(Error::invalid("logistic C must be positive"));
        }
        Ok(())
    }

    pub fn n_games(&self) -> usize {
        self.synth.games.len()
    }

    pub fn game_names(&self) -> BTreeMap<usize, String> {
        self.synth.games.iter().map(|g| (g.game_id, g.name.clone())).collect()
    }

    pub fn mlp_config(&self, l2: f64) -> MlpConfig {
        MlpConfig {
            hidden: self.training.mlp_hidden.clone(),
            l2,
            max_epochs: self.training.mlp_max_epochs,
            ..MlpConfig::default()
        }
    }

    pub fn bm_config(&self, dropout: f64) -> BmConfig {
        let t = &self.training;
        BmConfig {
            embedding_dim: t.bm_embedding_dim,
            fusion_dim: t.bm_fusion_dim,
            lstm_units: t.bm_lstm_units,
            head_units: t.bm_head_units,
            max_epochs: t.bm_max_epochs,
            dropout,
            ..BmConfig::new(self.n_games())
        }
    }
}
