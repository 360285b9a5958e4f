//! End-to-end stages over a working directory:
//!
//! ```text
//! <root>/sessions/          synth: sessions.csv + sessions.meta.json
//! <root>/prepared/          prep: labeled datasets + fit_meta.json
//! <root>/model/bm.json      train: Bifurcating Model on all prepared users
//! <root>/results/           evaluate: tables/, folds/, figures/, checkpoints/
//! <root>/results/report.md  report
//! ```
//!
//! Every stage derives its random streams from the configuration seed and
//! a stage label.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::figures::emit_figures;
use super::output::{self, write_csv, write_experiment};
use super::{
    audit_fold_fits, build_folds, grid_for, grid_search_cv, run_experiment, ExperimentOutput, Metric, ModelKind,
    Partition,
};
use super::{Format, PipelineConfig};
use crate::dataprep::{load_fit_meta, load_prepared, prepare, write_prepared, FitMeta, UserExample};
use crate::engine::Checkpoint;
use crate::error::{Error, Result};
use crate::models::BifurcatingModel;
use crate::seed;
use crate::telemetry::{emit_dataset, generate_population, load_dataset, PlayerHistory};

pub const REPORT_FILE: &str = "report.md";
pub const MODEL_FILE: &str = "bm.json";

/// Directory layout of one pipeline run.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.root.join("sessions")
    }

    pub fn prepared_dir(&self) -> PathBuf {
        self.root.join("prepared")
    }

    pub fn model_path(&self) -> PathBuf {
        self.root.join("model").join(MODEL_FILE)
    }

    pub fn results_dir(&self) -> PathBuf {
        self.root.join("results")
    }
}

/// Simulates every configured game; returns the histories in user-id order.
pub fn simulate(cfg: &PipelineConfig) -> Result<Vec<PlayerHistory>> {
    let s = seed::derive(cfg.seed, "synth", &[]);
    let mut all = Vec::new();
    for g in &cfg.synth.games {
        all.extend(generate_population(g, cfg.synth.users_per_game, s)?);
    }
    Ok(all)
}

/// `synth`: writes the session file; returns the number of rows.
pub fn synth(cfg: &PipelineConfig, dir: &Path) -> Result<usize> {
    let histories = simulate(cfg)?;
    emit_dataset(&histories, &cfg.game_names(), dir)
}

/// `prep`: labels, filters, balances and splits the session file.
pub fn prep(cfg: &PipelineConfig, sessions_dir: &Path, out_dir: &Path) -> Result<FitMeta> {
    let (histories, meta) = load_dataset(sessions_dir)?;
    let names = cfg.game_names();
    for g in &meta.games {
        if names.get(&g.game_id) != Some(&g.name) {
            return Err(Error::invalid(format!(
                "session file game {} ({}) is not in the configuration",
                g.game_id, g.name
            )));
        }
    }
    let data = prepare(
        &histories,
        cfg.n_games(),
        &cfg.prep,
        seed::derive(cfg.seed, "prep", &[]),
    )?;
    write_prepared(&data, &cfg.prep, cfg.seed, &names, out_dir)
}

/// `train`: fits the Bifurcating Model on every prepared user with the
/// whole-dataset feature statistics and tags it with the fit digest.
pub fn train(cfg: &PipelineConfig, prepared_dir: &Path, model_path: &Path) -> Result<Checkpoint> {
    let (data, meta) = load_prepared(prepared_dir)?;
    let grid = grid_for(ModelKind::Bm, &cfg.grids);
    let hp = if grid.len() == 1 {
        grid[0]
    } else {
        let tuning = build_folds(&data, Partition::Tuning, Format::Sequence)?;
        grid_search_cv(ModelKind::Bm, &grid, &tuning, cfg, 3)?.0
    };
    let super::HyperParams::Bm { dropout } = hp else {
        return Err(Error::invalid("Bifurcating Model grid produced foreign parameters"));
    };
    let fit = &meta.deployment_fit;
    let seqs = data
        .examples
        .iter()
        .map(|e| fit.padded(e))
        .collect::<Result<Vec<_>>>()?;
    let contexts: Vec<usize> = data.examples.iter().map(|e| e.game_id).collect();
    let survival: Vec<f64> = data.examples.iter().map(|e| e.survival).collect();
    let churn: Vec<bool> = data.examples.iter().map(|e| e.churn).collect();
    let mut model = BifurcatingModel::new(cfg.bm_config(dropout), seed::derive(cfg.seed, "train", &[]))?;
    model.fit(&seqs, &contexts, &survival, &churn)?;
    let mut ck = model.to_checkpoint()?;
    ck.fit_digest = Some(meta.digest.clone());
    if let Some(parent) = model_path.parent() {
        output::ensure_dir(parent)?;
    }
    ck.save(model_path)?;
    Ok(ck)
}

/// `evaluate`: runs the requested experiments and writes their outputs.
pub fn evaluate(
    cfg: &PipelineConfig,
    prepared_dir: &Path,
    results_dir: &Path,
    experiments: &[u8],
) -> Result<Vec<ExperimentOutput>> {
    let (data, meta) = load_prepared(prepared_dir)?;
    let mut outputs = Vec::new();
    for &e in experiments {
        let out = run_experiment(e, &data, cfg)?;
        audit_fold_fits(&data, &out.fits)?;
        write_experiment(&out, &meta.game_names, results_dir)?;
        if e == 3 {
            emit_figures(
                &out,
                &meta.game_names,
                seed::derive(cfg.seed, "figures", &[]),
                results_dir,
            )?;
        }
        outputs.push(out);
    }
    Ok(outputs)
}

/// One scored user of `predict`.
#[derive(Debug, Clone, PartialEq)]
pub struct UserPrediction {
    pub user_id: String,
    pub game_id: usize,
    pub op_length: usize,
    pub survival_point: f64,
    pub survival_std: f64,
    pub churn_point: f64,
    pub churn_std: f64,
    pub churns: bool,
}

/// `predict`: scores the observation windows of a raw session file with a
/// trained checkpoint, applying the stored feature statistics.
pub fn predict(
    model_path: &Path,
    prepared_dir: &Path,
    sessions_dir: &Path,
    out_path: &Path,
    mc_samples: usize,
    seed_value: u64,
) -> Result<Vec<UserPrediction>> {
    let ck = Checkpoint::load(model_path)?;
    let meta = load_fit_meta(prepared_dir)?;
    ck.require_digest(&meta.digest)?;
    let model = BifurcatingModel::from_checkpoint(&ck)?;
    let (histories, _) = load_dataset(sessions_dir)?;
    let examples = histories
        .iter()
        .map(UserExample::unlabeled)
        .collect::<Result<Vec<_>>>()?;
    let fit = &meta.deployment_fit;
    let seqs = examples.iter().map(|e| fit.padded(e)).collect::<Result<Vec<_>>>()?;
    let contexts: Vec<usize> = examples.iter().map(|e| e.game_id).collect();
    let mc = model.predict_mc(&seqs, &contexts, mc_samples, seed::derive(seed_value, "predict", &[]))?;
    let preds: Vec<UserPrediction> = examples
        .iter()
        .zip(&mc)
        .map(|(e, d)| UserPrediction {
            user_id: e.user_id.clone(),
            game_id: e.game_id,
            op_length: e.op_length,
            survival_point: d.survival_point,
            survival_std: d.survival_std,
            churn_point: d.churn_point,
            churn_std: d.churn_std,
            churns: d.churns(),
        })
        .collect();
    let rows: Vec<Vec<String>> = preds
        .iter()
        .map(|p| {
            vec![
                p.user_id.clone(),
                p.game_id.to_string(),
                p.op_length.to_string(),
                output::num(p.survival_point),
                output::num(p.survival_std),
                output::num(p.churn_point),
                output::num(p.churn_std),
                if p.churns { "churn" } else { "stay" }.to_string(),
            ]
        })
        .collect();
    write_csv(
        out_path,
        &[
            "user_id",
            "game_id",
            "op_length",
            "survival_point",
            "survival_std",
            "churn_point",
            "churn_std",
            "decision",
        ],
        &rows,
    )?;
    Ok(preds)
}

/// `report`: a Markdown summary of every experiment found in `results_dir`.
pub fn report(results_dir: &Path, names: &BTreeMap<usize, String>) -> Result<String> {
    let mut s = String::from("# Results\n");
    let mut found = false;
    for e in super::EXPERIMENTS {
        let path = output::results_path(results_dir, e);
        if !path.exists() {
            continue;
        }
        found = true;
        let table = output::read_results(&path)?;
        let models: Vec<ModelKind> = ModelKind::ALL
            .into_iter()
            .filter(|m| table.rows.iter().any(|r| r.model == *m))
            .collect();
        let games: Vec<usize> = table
            .rows
            .iter()
            .map(|r| r.game_id)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        for metric in [Metric::Smape, Metric::MacroF1] {
            let cols: Vec<ModelKind> = models
                .iter()
                .copied()
                .filter(|m| m.metrics().contains(&metric))
                .collect();
            let _ = writeln!(s, "\n## Experiment {e}: {} (mean ± std over folds)\n", metric.name());
            let _ = writeln!(
                s,
                "| game | {} |",
                cols.iter().map(|m| m.name()).collect::<Vec<_>>().join(" | ")
            );
            let _ = writeln!(s, "|---|{}", "---|".repeat(cols.len()));
            for &g in &games {
                let cells: Vec<String> = cols
                    .iter()
                    .map(|&m| {
                        table
                            .get(g, m, metric)
                            .map(|r| format!("{:.3} ± {:.3}", r.mean, r.std))
                            .unwrap_or_else(|| "-".into())
                    })
                    .collect();
                let name = names.get(&g).cloned().unwrap_or_else(|| format!("game-{g}"));
                let _ = writeln!(s, "| {name} | {} |", cells.join(" | "));
            }
        }
    }
    if !found {
        return Err(Error::invalid(format!(
            "no result tables under {}; run evaluate first",
            results_dir.display()
        )));
    }
    let path = results_dir.join(REPORT_FILE);
    fs::write(&path, &s).map_err(|e| Error::io(&path, e))?;
    Ok(s)
}
