//! Experiment orchestration: pipeline stages, grid search, cross-validated
//! evaluation and report emission.
//!
//! Experiment 1 feeds the baselines collapsed windows, Experiment 2 the
//! flattened padded sequences, Experiment 3 runs the mean baseline and the
//! Bifurcating Model on padded sequences with a separate context id.

pub mod config;
pub mod figures;
pub mod output;
pub mod pipeline;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::PipelineConfig;

use crate::dataprep::{FeatureFit, PaddedSequence, PreparedDataset, UserExample};
use crate::engine::Checkpoint;
use crate::error::{Error, Result};
use crate::metrics::{smape_clamped, ConfusionMatrix};
use crate::models::training::TrainingLog;
use crate::models::{BifurcatingModel, ElasticNet, EstimateDistribution, LogisticL1, Matrix, MeanModel, Mlp, MlpTask};
use crate::seed;

/// Experiments in run order.
pub const EXPERIMENTS: [u8; 3] = [1, 2, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    Mm,
    En,
    Lr,
    MlpR,
    MlpC,
    Bm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Mm,
        ModelKind::En,
        ModelKind::Lr,
        ModelKind::MlpR,
        ModelKind::MlpC,
        ModelKind::Bm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mm => "MM",
            ModelKind::En => "EN",
            ModelKind::Lr => "LR",
            ModelKind::MlpR => "MLPr",
            ModelKind::MlpC => "MLPc",
            ModelKind::Bm => "BM",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn estimates_survival(self) -> bool {
        matches!(self, ModelKind::Mm | ModelKind::En | ModelKind::MlpR | ModelKind::Bm)
    }

    pub fn estimates_churn(self) -> bool {
        matches!(self, ModelKind::Mm | ModelKind::Lr | ModelKind::MlpC | ModelKind::Bm)
    }

    pub fn metrics(self) -> Vec<Metric> {
        let mut m = Vec::new();
        if self.estimates_survival() {
            m.push(Metric::Smape);
        }
        if self.estimates_churn() {
            m.push(Metric::MacroF1);
        }
        m
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    Smape,
    MacroF1,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Smape => "smape",
            Metric::MacroF1 => "macro_f1",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Metric::Smape, Metric::MacroF1].into_iter().find(|m| m.name() == s)
    }

    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Metric::Smape => a < b,
            Metric::MacroF1 => a > b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    Collapsed,
    Flattened,
    Sequence,
}

/// Input format and model roster of an experiment.
pub fn roster(experiment: u8) -> Result<(Format, Vec<ModelKind>)> {
    use ModelKind::*;
    match experiment {
        1 => Ok((Format::Collapsed, vec![Mm, En, Lr, MlpR, MlpC])),
        2 => Ok((Format::Flattened, vec![Mm, En, Lr, MlpR, MlpC])),
        3 => Ok((Format::Sequence, vec![Mm, Bm])),
        e => Err(Error::invalid(format!(
            "unknown experiment {e}; experiments are 1, 2 and 3"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum HyperParams {
    None,
    ElasticNet { alpha: f64, l1_ratio: f64 },
    Logistic { c: f64 },
    Mlp { l2: f64 },
    Bm { dropout: f64 },
}

impl HyperParams {
    /// Larger means more regularization.
    pub fn strength(&self) -> f64 {
        match *self {
            HyperParams::None => 0.0,
            HyperParams::ElasticNet { alpha, .. } => alpha,
            HyperParams::Logistic { c } => 1.0 / c,
            HyperParams::Mlp { l2 } => l2,
            HyperParams::Bm { dropout } => dropout,
        }
    }

    fn values(&self) -> Vec<f64> {
        match *self {
            HyperParams::None => vec![],
            HyperParams::ElasticNet { alpha, l1_ratio } => vec![alpha, l1_ratio],
            HyperParams::Logistic { c } => vec![c],
            HyperParams::Mlp { l2 } => vec![l2],
            HyperParams::Bm { dropout } => vec![dropout],
        }
    }

    pub fn label(&self) -> String {
        match *self {
            HyperParams::None => "-".into(),
            HyperParams::ElasticNet { alpha, l1_ratio } => format!("alpha={alpha};l1_ratio={l1_ratio}"),
            HyperParams::Logistic { c } => format!("C={c}"),
            HyperParams::Mlp { l2 } => format!("l2={l2}"),
            HyperParams::Bm { dropout } => format!("dropout={dropout}"),
        }
    }
}

/// Grid points for one model family in configuration order.
pub fn grid_for(kind: ModelKind, grids: &config::Grids) -> Vec<HyperParams> {
    match kind {
        ModelKind::Mm => vec![HyperParams::None],
        ModelKind::En => grids
            .en_alpha
            .iter()
            .flat_map(|&alpha| {
                grids
                    .en_l1_ratio
                    .iter()
                    .map(move |&l1_ratio| HyperParams::ElasticNet { alpha, l1_ratio })
            })
            .collect(),
        ModelKind::Lr => grids.lr_c.iter().map(|&c| HyperParams::Logistic { c }).collect(),
        ModelKind::MlpR | ModelKind::MlpC => grids.mlp_l2.iter().map(|&l2| HyperParams::Mlp { l2 }).collect(),
        ModelKind::Bm => grids
            .bm_dropout
            .iter()
            .map(|&dropout| HyperParams::Bm { dropout })
            .collect(),
    }
}

/// Scores within this relative distance count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// Best-scoring point; ties go to stronger regularization, then to the
/// lexicographically smallest parameter vector.
pub fn select_best(scored: &[(HyperParams, f64)], metric: Metric) -> Result<HyperParams> {
    let mut best: Option<(HyperParams, f64)> = None;
    for &(hp, score) in scored {
        let Some((bhp, bscore)) = best else {
            best = Some((hp, score));
            continue;
        };
        let tied = (score - bscore).abs() <= TIE_TOLERANCE * score.abs().max(bscore.abs()).max(1.0);
        let wins = if tied {
            match hp.strength().total_cmp(&bhp.strength()) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => hp
                    .values()
                    .iter()
                    .zip(bhp.values().iter())
                    .map(|(a, b)| a.total_cmp(b))
                    .find(|o| o.is_ne())
                    .is_some_and(|o| o.is_lt()),
            }
        } else {
            metric.better(score, bscore)
        };
        if wins {
            best = Some((hp, score));
        }
    }
    best.map(|b| b.0)
        .ok_or_else(|| Error::invalid("empty hyper-parameter grid"))
}

/// Model inputs for one set of users.
#[derive(Debug, Clone)]
pub enum Inputs {
    Flat(Matrix),
    Seq {
        seqs: Vec<PaddedSequence>,
        contexts: Vec<usize>,
    },
}

impl Inputs {
    pub fn build(fit: &FeatureFit, examples: &[&UserExample], format: Format) -> Result<Self> {
        match format {
            Format::Collapsed => Ok(Inputs::Flat(Matrix::from_rows(
                &examples.iter().map(|e| fit.collapsed(e)).collect::<Result<Vec<_>>>()?,
            )?)),
            Format::Flattened => Ok(Inputs::Flat(Matrix::from_rows(
                &examples.iter().map(|e| fit.flattened(e)).collect::<Result<Vec<_>>>()?,
            )?)),
            Format::Sequence => Ok(Inputs::Seq {
                seqs: examples.iter().map(|e| fit.padded(e)).collect::<Result<Vec<_>>>()?,
                contexts: examples.iter().map(|e| e.game_id).collect(),
            }),
        }
    }

    fn flat(&self, kind: ModelKind) -> Result<&Matrix> {
        match self {
            Inputs::Flat(m) => Ok(m),
            Inputs::Seq { .. } => Err(Error::invalid(format!("{kind} needs a flat feature matrix"))),
        }
    }

    fn seq(&self, kind: ModelKind) -> Result<(&[PaddedSequence], &[usize])> {
        match self {
            Inputs::Seq { seqs, contexts } => Ok((seqs, contexts)),
            Inputs::Flat(_) => Err(Error::invalid(format!(
                "{kind} needs padded sequences with context ids"
            ))),
        }
    }
}

/// Which partition of the split plan a fold belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Tuning,
    Validation,
}

/// One cross-validation fold with features fitted on its training users.
#[derive(Debug, Clone)]
pub struct FoldData<'a> {
    pub partition: Partition,
    pub fold: usize,
    pub train: Vec<&'a UserExample>,
    pub test: Vec<&'a UserExample>,
    pub fit: FeatureFit,
    pub x_train: Inputs,
    pub x_test: Inputs,
}

impl<'a> FoldData<'a> {
    pub fn build(data: &'a PreparedDataset, partition: Partition, fold: usize, format: Format) -> Result<Self> {
        let (tr, te) = data
            .plan
            .fold_indices(&data.examples, partition == Partition::Tuning, fold);
        if tr.is_empty() || te.is_empty() {
            return Err(Error::invalid(format!("{partition:?} fold {fold} has an empty side")));
        }
        let train = data.select(&tr);
        let test = data.select(&te);
        let fit = FeatureFit::fit(&train, data.n_games)?;
        let x_train = Inputs::build(&fit, &train, format)?;
        let x_test = Inputs::build(&fit, &test, format)?;
        Ok(FoldData {
            partition,
            fold,
            train,
            test,
            fit,
            x_train,
            x_test,
        })
    }

    fn survival_train(&self) -> Vec<f64> {
        self.train.iter().map(|e| e.survival).collect()
    }

    fn churn_train(&self) -> Vec<bool> {
        self.train.iter().map(|e| e.churn).collect()
    }
}

/// SHA-256 of the JSON form of a feature fit; tags fold checkpoints.
pub fn fit_digest(fit: &FeatureFit) -> Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(fit)?)))
}

/// Test-side outputs of one fitted model.
#[derive(Debug, Clone, Default)]
pub struct Predictions {
    pub survival: Option<Vec<f64>>,
    pub churn_prob: Option<Vec<f64>>,
    pub churn: Option<Vec<bool>>,
    pub mc: Option<Vec<EstimateDistribution>>,
    pub checkpoint: Option<Checkpoint>,
    pub log: Option<TrainingLog>,
}

fn threshold(p: &[f64]) -> Vec<bool> {
    p.iter().map(|&v| v >= 0.5).collect()
}

/// Fits `kind` on the fold's training side and predicts its test side.
/// `mc_samples` switches the Bifurcating Model to Monte-Carlo prediction.
pub fn fit_predict(
    kind: ModelKind,
    hp: HyperParams,
    fold: &FoldData<'_>,
    cfg: &PipelineConfig,
    seed_value: u64,
    mc_samples: Option<usize>,
) -> Result<Predictions> {
    let n_test = fold.test.len();
    let mut out = Predictions::default();
    match (kind, hp) {
        (ModelKind::Mm, HyperParams::None) => {
            let mut m = MeanModel::new(seed_value);
            m.fit(&fold.survival_train(), &fold.churn_train())?;
            out.survival = Some(m.predict_survival(n_test)?);
            out.churn_prob = Some(vec![m.churn_rate.unwrap_or(0.0); n_test]);
            out.churn = Some(m.predict_churn(n_test, 0)?);
        }
        (ModelKind::En, HyperParams::ElasticNet { alpha, l1_ratio }) => {
            let mut m = ElasticNet::new(alpha, l1_ratio)?;
            m.fit(fold.x_train.flat(kind)?, &fold.survival_train())?;
            out.survival = Some(m.predict(fold.x_test.flat(kind)?)?);
        }
        (ModelKind::Lr, HyperParams::Logistic { c }) => {
            let mut m = LogisticL1::new(c)?;
            m.fit(fold.x_train.flat(kind)?, &fold.churn_train())?;
            let p = m.predict_proba(fold.x_test.flat(kind)?)?;
            out.churn = Some(threshold(&p));
            out.churn_prob = Some(p);
        }
        (ModelKind::MlpR, HyperParams::Mlp { l2 }) => {
            let x = fold.x_train.flat(kind)?;
            let mut m = Mlp::new(MlpTask::Regressor, x.cols, cfg.mlp_config(l2), seed_value)?;
            out.log = Some(m.fit(x, &fold.survival_train())?.clone());
            out.survival = Some(m.predict(fold.x_test.flat(kind)?)?);
        }
        (ModelKind::MlpC, HyperParams::Mlp { l2 }) => {
            let x = fold.x_train.flat(kind)?;
            let y: Vec<f64> = fold.churn_train().iter().map(|&c| f64::from(u8::from(c))).collect();
            let mut m = Mlp::new(MlpTask::Classifier, x.cols, cfg.mlp_config(l2), seed_value)?;
            out.log = Some(m.fit(x, &y)?.clone());
            let p = m.predict(fold.x_test.flat(kind)?)?;
            out.churn = Some(threshold(&p));
            out.churn_prob = Some(p);
        }
        (ModelKind::Bm, HyperParams::Bm { dropout }) => {
            let (seqs, ctx) = fold.x_train.seq(kind)?;
            let mut m = BifurcatingModel::new(cfg.bm_config(dropout), seed_value)?;
            out.log = Some(m.fit(seqs, ctx, &fold.survival_train(), &fold.churn_train())?.clone());
            let (tseqs, tctx) = fold.x_test.seq(kind)?;
            match mc_samples {
                Some(n) => {
                    let mc = m.predict_mc(tseqs, tctx, n, seed::derive(seed_value, "mc", &[]))?;
                    out.survival = Some(mc.iter().map(|d| d.survival_point).collect());
                    out.churn_prob = Some(mc.iter().map(|d| d.churn_point).collect());
                    out.churn = Some(mc.iter().map(EstimateDistribution::churns).collect());
                    out.mc = Some(mc);
                }
                None => {
                    let (s, c) = m.predict_point(tseqs, tctx)?;
                    out.survival = Some(s);
                    out.churn = Some(threshold(&c));
                    out.churn_prob = Some(c);
                }
            }
            let mut ck = m.to_checkpoint()?;
            ck.fit_digest = Some(fit_digest(&fold.fit)?);
            out.checkpoint = Some(ck);
        }
        (k, hp) => {
            return Err(Error::invalid(format!(
                "hyper-parameters {} do not fit model {k}",
                hp.label()
            )));
        }
    }
    Ok(out)
}

/// Score used to rank grid points: SMAPE for survival-only models,
/// macro-F1 for churn-only models, and SMAPE − macro-F1 for the joint model.
fn selection_score(kind: ModelKind, fold: &FoldData<'_>, pred: &Predictions) -> Result<(Metric, f64)> {
    let s = match &pred.survival {
        Some(p) => Some(smape_clamped(p, &fold.test.iter().map(|e| e.survival).collect::<Vec<_>>())?.0),
        None => None,
    };
    let f = match &pred.churn {
        Some(c) => {
            Some(ConfusionMatrix::from_labels(c, &fold.test.iter().map(|e| e.churn).collect::<Vec<_>>())?.macro_f1())
        }
        None => None,
    };
    match (kind, s, f) {
        (ModelKind::Bm | ModelKind::Mm, Some(s), Some(f)) => Ok((Metric::Smape, s - f)),
        (_, Some(s), None) => Ok((Metric::Smape, s)),
        (_, None, Some(f)) => Ok((Metric::MacroF1, f)),
        _ => Err(Error::invalid(format!("{kind} produced no estimates"))),
    }
}

/// One grid point's cross-validated score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub model: ModelKind,
    pub params: HyperParams,
    pub metric: Metric,
    /// Empty for singleton grids, which are not searched.
    pub fold_scores: Vec<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub selected: bool,
}

/// Population mean and standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    crate::dataprep::mean_std(v)
}

/// Exhaustive search over `grid` with cross-validation on the tuning folds.
pub fn grid_search_cv(
    kind: ModelKind,
    grid: &[HyperParams],
    folds: &[FoldData<'_>],
    cfg: &PipelineConfig,
    experiment: u8,
) -> Result<(HyperParams, Vec<GridRow>)> {
    if grid.is_empty() {
        return Err(Error::invalid(format!("empty grid for {kind}")));
    }
    if let Some(f) = folds.iter().find(|f| f.partition != Partition::Tuning) {
        return Err(Error::invalid(format!(
            "grid search must only see tuning folds, got {:?} fold {}",
            f.partition, f.fold
        )));
    }
    if grid.len() == 1 {
        let metric = if kind.estimates_survival() {
            Metric::Smape
        } else {
            Metric::MacroF1
        };
        return Ok((
            grid[0],
            vec![GridRow {
                model: kind,
                params: grid[0],
                metric,
                fold_scores: vec![],
                mean: None,
                std: None,
                selected: true,
            }],
        ));
    }
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..folds.len()).map(move |f| (g, f)))
        .collect();
    let scores: Vec<(Metric, f64)> = jobs
        .par_iter()
        .map(|&(g, f)| {
            let fold = &folds[f];
            let s = seed::derive(
                cfg.seed,
                "grid",
                &[u64::from(experiment), kind as u64, g as u64, fold.fold as u64],
            );
            let pred = fit_predict(kind, grid[g], fold, cfg, s, None)?;
            selection_score(kind, fold, &pred)
        })
        .collect::<Result<_>>()?;
    let metric = scores[0].0;
    let mut rows = Vec::new();
    let mut scored = Vec::new();
    for (g, hp) in grid.iter().enumerate() {
        let fs: Vec<f64> = (0..folds.len()).map(|f| scores[g * folds.len() + f].1).collect();
        let (m, s) = mean_std(&fs);
        scored.push((*hp, m));
        rows.push(GridRow {
            model: kind,
            params: *hp,
            metric,
            fold_scores: fs,
            mean: Some(m),
            std: Some(s),
            selected: false,
        });
    }
    let best = select_best(&scored, metric)?;
    for r in &mut rows {
        r.selected = r.params == best;
    }
    Ok((best, rows))
}

/// Predictions of one model on one validation fold.
#[derive(Debug, Clone)]
pub struct FoldPredictions {
    pub fold: usize,
    pub model: ModelKind,
    pub user_ids: Vec<String>,
    pub games: Vec<usize>,
    pub survival_truth: Vec<f64>,
    pub churn_truth: Vec<bool>,
    pub predictions: Predictions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetric {
    pub fold: usize,
    pub game_id: usize,
    pub model: ModelKind,
    pub metric: Metric,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldConfusion {
    pub fold: usize,
    pub game_id: usize,
    pub model: ModelKind,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub game_id: usize,
    pub model: ModelKind,
    pub metric: Metric,
    pub mean: f64,
    pub std: f64,
    pub n_folds: usize,
}

/// Mean ± population std across folds per (game, model, metric).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn from_fold_metrics(metrics: &[FoldMetric]) -> Self {
        let mut groups: BTreeMap<(usize, ModelKind, Metric), Vec<(usize, f64)>> = BTreeMap::new();
        for m in metrics {
            groups
                .entry((m.game_id, m.model, m.metric))
                .or_default()
                .push((m.fold, m.value));
        }
        let rows = groups
            .into_iter()
            .map(|((game_id, model, metric), mut v)| {
                v.sort_by_key(|x| x.0);
                let vals: Vec<f64> = v.iter().map(|x| x.1).collect();
                let (mean, std) = mean_std(&vals);
                ResultRow {
                    game_id,
                    model,
                    metric,
                    mean,
                    std,
                    n_folds: vals.len(),
                }
            })
            .collect();
        ResultTable { rows }
    }

    pub fn get(&self, game_id: usize, model: ModelKind, metric: Metric) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.game_id == game_id && r.model == model && r.metric == metric)
    }
}

/// Fitted feature statistics of one fold, kept for the leakage audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFit {
    pub partition: Partition,
    pub fold: usize,
    pub test_ids: Vec<String>,
    pub fit: FeatureFit,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub experiment: u8,
    pub format: Format,
    pub roster: Vec<ModelKind>,
    pub selected: BTreeMap<ModelKind, HyperParams>,
    pub grid: Vec<GridRow>,
    pub fits: Vec<FoldFit>,
    pub predictions: Vec<FoldPredictions>,
    pub fold_metrics: Vec<FoldMetric>,
    pub fold_confusions: Vec<FoldConfusion>,
    pub table: ResultTable,
}

fn score_fold(fp: &FoldPredictions) -> Result<(Vec<FoldMetric>, Vec<FoldConfusion>)> {
    let mut by_game: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &g) in fp.games.iter().enumerate() {
        by_game.entry(g).or_default().push(i);
    }
    let mut metrics = Vec::new();
    let mut confusions = Vec::new();
    for (g, rows) in by_game {
        if let Some(s) = &fp.predictions.survival {
            let pred: Vec<f64> = rows.iter().map(|&i| s[i]).collect();
            let truth: Vec<f64> = rows.iter().map(|&i| fp.survival_truth[i]).collect();
            let (value, clamped) = smape_clamped(&pred, &truth)?;
            if clamped > 0 {
                log::info!(
                    "{} fold {} game {g}: clamped {clamped} negative survival estimates",
                    fp.model,
                    fp.fold
                );
            }
            metrics.push(FoldMetric {
                fold: fp.fold,
                game_id: g,
                model: fp.model,
                metric: Metric::Smape,
                value,
            });
        }
        if let Some(c) = &fp.predictions.churn {
            let pred: Vec<bool> = rows.iter().map(|&i| c[i]).collect();
            let truth: Vec<bool> = rows.iter().map(|&i| fp.churn_truth[i]).collect();
            let cm = ConfusionMatrix::from_labels(&pred, &truth)?;
            metrics.push(FoldMetric {
                fold: fp.fold,
                game_id: g,
                model: fp.model,
                metric: Metric::MacroF1,
                value: cm.macro_f1(),
            });
            confusions.push(FoldConfusion {
                fold: fp.fold,
                game_id: g,
                model: fp.model,
                confusion: cm,
            });
        }
    }
    Ok((metrics, confusions))
}

/// Builds all folds of one partition.
pub fn build_folds<'a>(data: &'a PreparedDataset, partition: Partition, format: Format) -> Result<Vec<FoldData<'a>>> {
    (0..data.plan.n_folds)
        .into_par_iter()
        .map(|k| FoldData::build(data, partition, k, format))
        .collect()
}

/// Grid search on the tuning folds, then 10-fold evaluation of the selected
/// configuration of every roster model on the validation folds.
pub fn run_experiment(experiment: u8, data: &PreparedDataset, cfg: &PipelineConfig) -> Result<ExperimentOutput> {
    let (format, models) = roster(experiment)?;
    let mc_samples = cfg.experiments.mc_samples;

    let tuning = build_folds(data, Partition::Tuning, format)?;
    let mut selected = BTreeMap::new();
    let mut grid = Vec::new();
    for &kind in &models {
        let (best, rows) = grid_search_cv(kind, &grid_for(kind, &cfg.grids), &tuning, cfg, experiment)?;
        log::info!("experiment {experiment}: {kind} selected {}", best.label());
        selected.insert(kind, best);
        grid.extend(rows);
    }
    let mut fits: Vec<FoldFit> = tuning.iter().map(fold_fit).collect();
    drop(tuning);

    let validation = build_folds(data, Partition::Validation, format)?;
    fits.extend(validation.iter().map(fold_fit));
    let jobs: Vec<(ModelKind, usize)> = models
        .iter()
        .flat_map(|&m| (0..validation.len()).map(move |f| (m, f)))
        .collect();
    let predictions: Vec<FoldPredictions> = jobs
        .par_iter()
        .map(|&(kind, f)| {
            let fold = &validation[f];
            let s = seed::derive(
                cfg.seed,
                "evaluate",
                &[u64::from(experiment), kind as u64, fold.fold as u64],
            );
            let mc = (kind == ModelKind::Bm).then_some(mc_samples);
            let predictions = fit_predict(kind, selected[&kind], fold, cfg, s, mc)?;
            log::info!("experiment {experiment}: {kind} fold {} done", fold.fold);
            Ok(FoldPredictions {
                fold: fold.fold,
                model: kind,
                user_ids: fold.test.iter().map(|e| e.user_id.clone()).collect(),
                games: fold.test.iter().map(|e| e.game_id).collect(),
                survival_truth: fold.test.iter().map(|e| e.survival).collect(),
                churn_truth: fold.test.iter().map(|e| e.churn).collect(),
                predictions,
            })
        })
        .collect::<Result<_>>()?;

    let mut fold_metrics = Vec::new();
    let mut fold_confusions = Vec::new();
    for fp in &predictions {
        let (m, c) = score_fold(fp)?;
        fold_metrics.extend(m);
        fold_confusions.extend(c);
    }
    let table = ResultTable::from_fold_metrics(&fold_metrics);
    Ok(ExperimentOutput {
        experiment,
        format,
        roster: models,
        selected,
        grid,
        fits,
        predictions,
        fold_metrics,
        fold_confusions,
        table,
    })
}

fn fold_fit(f: &FoldData<'_>) -> FoldFit {
    FoldFit {
        partition: f.partition,
        fold: f.fold,
        test_ids: f.test.iter().map(|e| e.user_id.clone()).collect(),
        fit: f.fit.clone(),
    }
}

/// Checks that every fold's statistics come from its own training users:
/// training ids are exactly the partition minus the fold, disjoint from the
/// fold's test ids and from the other partition, and refitting on those
/// users reproduces the stored quartiles and `max_len` bit for bit.
pub fn audit_fold_fits(data: &PreparedDataset, fits: &[FoldFit]) -> Result<()> {
    let tuning = &data.plan.tuning_ids;
    let validation = &data.plan.validation_ids;
    if !tuning.is_disjoint(validation) {
        return Err(Error::invalid("tuning and validation partitions overlap"));
    }
    let by_id: BTreeMap<&str, &UserExample> = data.examples.iter().map(|e| (e.user_id.as_str(), e)).collect();
    for ff in fits {
        let (own, other) = match ff.partition {
            Partition::Tuning => (tuning, validation),
            Partition::Validation => (validation, tuning),
        };
        let train: BTreeSet<&str> = ff.fit.training_ids.iter().map(String::as_str).collect();
        let test: BTreeSet<&str> = ff.test_ids.iter().map(String::as_str).collect();
        let where_ = format!("{:?} fold {}", ff.partition, ff.fold);
        if !train.is_disjoint(&test) {
            return Err(Error::invalid(format!(
                "{where_}: training ids overlap the held-out fold"
            )));
        }
        if train.iter().any(|id| other.contains(*id)) {
            return Err(Error::invalid(format!(
                "{where_}: statistics use users of the other partition"
            )));
        }
        let expected: BTreeSet<&str> = own
            .iter()
            .map(String::as_str)
            .filter(|id| data.plan.fold_assignments.get(*id) != Some(&ff.fold))
            .collect();
        if train != expected {
            return Err(Error::invalid(format!(
                "{where_}: training ids differ from the split plan"
            )));
        }
        let examples: Vec<&UserExample> = train
            .iter()
            .map(|id| {
                by_id
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("{where_}: unknown user {id}")))
            })
            .collect::<Result<_>>()?;
        let refit = FeatureFit::fit(&examples, data.n_games)?;
        if refit.quartiles != ff.fit.quartiles || refit.max_len != ff.fit.max_len {
            return Err(Error::invalid(format!(
                "{where_}: stored statistics do not match a refit on the training users"
            )));
        }
    }
    Ok(())
}
