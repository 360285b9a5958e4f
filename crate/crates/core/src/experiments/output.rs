//! Files written by an experiment run.
//!
//! ```text
//! tables/exp{e}_results.csv     game_id,game,model,metric,mean,std,n_folds
//! tables/exp{e}_grid.csv        model,params,metric,mean,std,fold_scores,selected
//! tables/exp{e}_confusion.csv   pooled over folds, per game and churn model
//! folds/exp{e}_metrics.csv      fold,game_id,model,metric,value
//! folds/exp{e}_confusion.csv    fold,game_id,model,tn,fp,fn,tp
//! folds/exp{e}_predictions.csv  one row per (model, fold, user)
//! folds/exp{e}_fits.json        selected hyper-parameters and fold statistics
//! checkpoints/exp{e}_bm_fold{k}.json
//! ```
//!
//! Reals use the shortest representation that round-trips, so the
//! aggregates can be recomputed exactly from the per-fold files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    ExperimentOutput, FoldConfusion, FoldFit, FoldMetric, HyperParams, Metric, ModelKind, ResultRow, ResultTable,
};
use crate::error::{Error, Result};
use crate::metrics::ConfusionMatrix;

pub const TABLES_DIR: &str = "tables";
pub const FOLDS_DIR: &str = "folds";
pub const FIGURES_DIR: &str = "figures";
pub const CHECKPOINTS_DIR: &str = "checkpoints";

pub fn results_path(dir: &Path, e: u8) -> PathBuf {
    dir.join(TABLES_DIR).join(format!("exp{e}_results.csv"))
}

pub fn grid_path(dir: &Path, e: u8) -> PathBuf {
    dir.join(TABLES_DIR).join(format!("exp{e}_grid.csv"))
}

pub fn pooled_confusion_path(dir: &Path, e: u8) -> PathBuf {
    dir.join(TABLES_DIR).join(format!("exp{e}_confusion.csv"))
}

pub fn fold_metrics_path(dir: &Path, e: u8) -> PathBuf {
    dir.join(FOLDS_DIR).join(format!("exp{e}_metrics.csv"))
}

pub fn fold_confusion_path(dir: &Path, e: u8) -> PathBuf {
    dir.join(FOLDS_DIR).join(format!("exp{e}_confusion.csv"))
}

pub fn predictions_path(dir: &Path, e: u8) -> PathBuf {
    dir.join(FOLDS_DIR).join(format!("exp{e}_predictions.csv"))
}

pub fn fits_path(dir: &Path, e: u8) -> PathBuf {
    dir.join(FOLDS_DIR).join(format!("exp{e}_fits.json"))
}

pub fn checkpoint_path(dir: &Path, e: u8, fold: usize) -> PathBuf {
    dir.join(CHECKPOINTS_DIR).join(format!("exp{e}_bm_fold{fold}.json"))
}

pub(crate) fn num(v: f64) -> String {
    format!("{v}")
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let found = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("expected columns {header:?}"),
        });
    }
    r.records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| csv_error(path, e))
}

fn parse<T: std::str::FromStr>(path: &Path, s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Format {
        path: path.to_path_buf(),
        reason: format!("bad {what} {s:?}"),
    })
}

fn parse_model(path: &Path, s: &str) -> Result<ModelKind> {
    ModelKind::parse(s).ok_or_else(|| Error::Format {
        path: path.to_path_buf(),
        reason: format!("unknown model {s:?}"),
    })
}

fn parse_metric(path: &Path, s: &str) -> Result<Metric> {
    Metric::parse(s).ok_or_else(|| Error::Format {
        path: path.to_path_buf(),
        reason: format!("unknown metric {s:?}"),
    })
}

fn game_name(names: &BTreeMap<usize, String>, g: usize) -> String {
    names.get(&g).cloned().unwrap_or_else(|| format!("game-{g}"))
}

const RESULTS_HEADER: [&str; 7] = ["game_id", "game", "model", "metric", "mean", "std", "n_folds"];
const METRICS_HEADER: [&str; 5] = ["fold", "game_id", "model", "metric", "value"];
const CONFUSION_HEADER: [&str; 7] = ["fold", "game_id", "model", "tn", "fp", "fn", "tp"];

pub fn write_results(path: &Path, table: &ResultTable, names: &BTreeMap<usize, String>) -> Result<()> {
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.game_id.to_string(),
                game_name(names, r.game_id),
                r.model.name().to_string(),
                r.metric.name().to_string(),
                num(r.mean),
                num(r.std),
                r.n_folds.to_string(),
            ]
        })
        .collect();
    write_csv(path, &RESULTS_HEADER, &rows)
}

pub fn read_results(path: &Path) -> Result<ResultTable> {
    let rows = read_csv(path, &RESULTS_HEADER)?
        .iter()
        .map(|r| {
            Ok(ResultRow {
                game_id: parse(path, &r[0], "game id")?,
                model: parse_model(path, &r[2])?,
                metric: parse_metric(path, &r[3])?,
                mean: parse(path, &r[4], "mean")?,
                std: parse(path, &r[5], "std")?,
                n_folds: parse(path, &r[6], "fold count")?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ResultTable { rows })
}

pub fn read_fold_metrics(path: &Path) -> Result<Vec<FoldMetric>> {
    read_csv(path, &METRICS_HEADER)?
        .iter()
        .map(|r| {
            Ok(FoldMetric {
                fold: parse(path, &r[0], "fold")?,
                game_id: parse(path, &r[1], "game id")?,
                model: parse_model(path, &r[2])?,
                metric: parse_metric(path, &r[3])?,
                value: parse(path, &r[4], "value")?,
            })
        })
        .collect()
}

pub fn read_fold_confusions(path: &Path) -> Result<Vec<FoldConfusion>> {
    read_csv(path, &CONFUSION_HEADER)?
        .iter()
        .map(|r| {
            let c = |i: usize| parse::<u64>(path, &r[i], "count");
            Ok(FoldConfusion {
                fold: parse(path, &r[0], "fold")?,
                game_id: parse(path, &r[1], "game id")?,
                model: parse_model(path, &r[2])?,
                confusion: ConfusionMatrix {
                    counts: [[c(3)?, c(4)?], [c(5)?, c(6)?]],
                },
            })
        })
        .collect()
}

/// Selected hyper-parameters and per-fold feature statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitsFile {
    pub experiment: u8,
    pub selected: BTreeMap<String, HyperParams>,
    pub folds: Vec<FoldFit>,
}

pub fn read_fits(path: &Path) -> Result<FitsFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Writes every table, per-fold file and checkpoint of one experiment.
pub fn write_experiment(out: &ExperimentOutput, names: &BTreeMap<usize, String>, dir: &Path) -> Result<Vec<PathBuf>> {
    let e = out.experiment;
    let mut written = Vec::new();

    let p = results_path(dir, e);
    write_results(&p, &out.table, names)?;
    written.push(p);

    let grid_rows: Vec<Vec<String>> = out
        .grid
        .iter()
        .map(|g| {
            vec![
                g.model.name().to_string(),
                g.params.label(),
                g.metric.name().to_string(),
                g.mean.map(num).unwrap_or_default(),
                g.std.map(num).unwrap_or_default(),
                g.fold_scores.iter().map(|&v| num(v)).collect::<Vec<_>>().join(";"),
                u8::from(g.selected).to_string(),
            ]
        })
        .collect();
    let p = grid_path(dir, e);
    write_csv(
        &p,
        &["model", "params", "metric", "mean", "std", "fold_scores", "selected"],
        &grid_rows,
    )?;
    written.push(p);

    let mut pooled: BTreeMap<(usize, ModelKind), ConfusionMatrix> = BTreeMap::new();
    for fc in &out.fold_confusions {
        let acc = pooled.entry((fc.game_id, fc.model)).or_default();
        for t in 0..2 {
            for q in 0..2 {
                acc.counts[t][q] += fc.confusion.counts[t][q];
            }
        }
    }
    let pooled_rows: Vec<Vec<String>> = pooled
        .iter()
        .map(|(&(g, m), cm)| {
            let n = cm.normalized();
            let c = cm.counts;
            vec![
                g.to_string(),
                game_name(names, g),
                m.name().to_string(),
                c[0][0].to_string(),
                c[0][1].to_string(),
                c[1][0].to_string(),
                c[1][1].to_string(),
                num(n[0][0]),
                num(n[0][1]),
                num(n[1][0]),
                num(n[1][1]),
                num(cm.macro_f1()),
            ]
        })
        .collect();
    let p = pooled_confusion_path(dir, e);
    write_csv(
        &p,
        &[
            "game_id",
            "game",
            "model",
            "tn",
            "fp",
            "fn",
            "tp",
            "non_churner_as_non_churner",
            "non_churner_as_churner",
            "churner_as_non_churner",
            "churner_as_churner",
            "macro_f1",
        ],
        &pooled_rows,
    )?;
    written.push(p);

    let metric_rows: Vec<Vec<String>> = out
        .fold_metrics
        .iter()
        .map(|m| {
            vec![
                m.fold.to_string(),
                m.game_id.to_string(),
                m.model.name().to_string(),
                m.metric.name().to_string(),
                num(m.value),
            ]
        })
        .collect();
    let p = fold_metrics_path(dir, e);
    write_csv(&p, &METRICS_HEADER, &metric_rows)?;
    written.push(p);

    let confusion_rows: Vec<Vec<String>> = out
        .fold_confusions
        .iter()
        .map(|f| {
            let c = f.confusion.counts;
            vec![
                f.fold.to_string(),
                f.game_id.to_string(),
                f.model.name().to_string(),
                c[0][0].to_string(),
                c[0][1].to_string(),
                c[1][0].to_string(),
                c[1][1].to_string(),
            ]
        })
        .collect();
    let p = fold_confusion_path(dir, e);
    write_csv(&p, &CONFUSION_HEADER, &confusion_rows)?;
    written.push(p);

    let mut pred_rows = Vec::new();
    for fp in &out.predictions {
        let pr = &fp.predictions;
        for i in 0..fp.user_ids.len() {
            let opt = |v: &Option<Vec<f64>>| v.as_ref().map(|v| num(v[i])).unwrap_or_default();
            pred_rows.push(vec![
                fp.fold.to_string(),
                fp.user_ids[i].clone(),
                fp.games[i].to_string(),
                fp.model.name().to_string(),
                num(fp.survival_truth[i]),
                opt(&pr.survival),
                u8::from(fp.churn_truth[i]).to_string(),
                opt(&pr.churn_prob),
                pr.churn
                    .as_ref()
                    .map(|c| u8::from(c[i]).to_string())
                    .unwrap_or_default(),
                pr.mc.as_ref().map(|m| num(m[i].survival_std)).unwrap_or_default(),
                pr.mc.as_ref().map(|m| num(m[i].churn_std)).unwrap_or_default(),
            ]);
        }
    }
    let p = predictions_path(dir, e);
    write_csv(
        &p,
        &[
            "fold",
            "user_id",
            "game_id",
            "model",
            "survival_true",
            "survival_pred",
            "churn_true",
            "churn_prob",
            "churn_pred",
            "survival_std",
            "churn_std",
        ],
        &pred_rows,
    )?;
    written.push(p);

    let fits = FitsFile {
        experiment: e,
        selected: out.selected.iter().map(|(k, v)| (k.name().to_string(), *v)).collect(),
        folds: out.fits.clone(),
    };
    let p = fits_path(dir, e);
    let mut bytes = serde_json::to_vec(&fits)?;
    bytes.push(b'\n');
    fs::write(&p, bytes).map_err(|err| Error::io(&p, err))?;
    written.push(p);

    for fp in &out.predictions {
        if let Some(ck) = &fp.predictions.checkpoint {
            let p = checkpoint_path(dir, e, fp.fold);
            ensure_dir(p.parent().expect("has parent"))?;
            ck.save(&p)?;
            written.push(p);
        }
    }
    Ok(written)
}
