//! Acceptance suite: every criterion runs in sequence, prints one PASS/FAIL
//! line, and the test fails at the end if any criterion failed.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use bifurcate::dataprep::{
    compute_cutoff, compute_inactivity_threshold, filter_outlier_users, game_thresholds, prepare, robust_rescale,
    FeatureFit, PreparedDataset,
};
use bifurcate::engine::loss;
use bifurcate::experiments::output::{
    fold_confusion_path, fold_metrics_path, read_fold_confusions, read_fold_metrics, write_experiment,
};
use bifurcate::experiments::pipeline::{self, Workspace};
use bifurcate::experiments::{
    audit_fold_fits, run_experiment, ExperimentOutput, FoldData, Format, Metric, ModelKind, Partition, PipelineConfig,
};
use bifurcate::metrics::{macro_f1, smape_eval, ConfusionMatrix};
use bifurcate::models::{BifurcatingModel, SequenceBatch};
use bifurcate::seed;
use common::{gradcheck, oracles};
use rand::Rng;

type Outcome = Result<String, String>;

fn ok<T>(r: bifurcate::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Ledger {
    lines: Vec<(bool, String)>,
}

impl Ledger {
    fn run(&mut self, id: u8, name: &str, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        let line = format!(
            "[{}] criterion {id:>2} {name} ({secs:.1} s): {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
        println!("{line}");
        self.lines.push((pass, line));
    }
}

// ---------------------------------------------------------------- 1

fn formula_oracles() -> Outcome {
    const INSTANCES: usize = 200;
    const TOL: f64 = 1e-12;
    let start = Instant::now();
    let mut rng = seed::rng(1);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut note = |name: &'static str, err: f64| {
        let w = worst.entry(name).or_insert(0.0);
        *w = w.max(err);
    };
    for _ in 0..INSTANCES {
        let total = rng.random_range(1..300);
        let completion = rng.random_bool(0.5).then(|| rng.random_range(1..=total));
        let c = ok(compute_cutoff(total, completion))?;
        note(
            "cutoff",
            if c == oracles::cutoff(total, completion) {
                0.0
            } else {
                1.0
            },
        );

        let n = rng.random_range(1..80);
        let gaps: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5000.0)).collect();
        let t = ok(compute_inactivity_threshold(&gaps))?;
        note(
            "inactivity_threshold",
            oracles::rel_diff(t, oracles::inactivity_threshold(&gaps)),
        );

        let n = rng.random_range(4..60);
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let (scaled, _) = ok(robust_rescale(&values, None))?;
        let expected = oracles::robust_rescale(&values);
        for (a, b) in scaled.iter().zip(&expected) {
            note("robust_rescale", oracles::rel_diff(*a, *b));
        }

        let n = rng.random_range(1..60);
        let pred: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1000.0)).collect();
        let truth: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1000.0)).collect();
        note(
            "smape_eval",
            oracles::rel_diff(ok(smape_eval(&pred, &truth))?, oracles::smape(&pred, &truth)),
        );
        note(
            "loss_mse",
            oracles::rel_diff(ok(loss::mse(&pred, &truth))?, oracles::mse(&pred, &truth)),
        );

        let probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
        let labels: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
        note(
            "loss_bce",
            oracles::rel_diff(ok(loss::bce(&probs, &labels))?, oracles::bce(&probs, &labels)),
        );

        let p: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let t: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        note(
            "macro_f1",
            oracles::rel_diff(ok(macro_f1(&p, &t))?, oracles::macro_f1(&p, &t)),
        );
    }
    let elapsed = start.elapsed();
    let bad: Vec<String> = worst
        .iter()
        .filter(|(_, &e)| e > TOL)
        .map(|(k, e)| format!("{k} rel err {e:e}"))
        .collect();
    ensure(bad.is_empty(), || bad.join(", "))?;
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    let max = worst.values().copied().fold(0.0, f64::max);
    Ok(format!(
        "{} functions x {INSTANCES} instances, max rel err {max:e}",
        worst.len()
    ))
}

// ---------------------------------------------------------------- 2

fn cutoff_anchor() -> Outcome {
    let c = ok(compute_cutoff(9, None))?;
    ensure(c == 3, || format!("S_t = 9 gave {c}"))?;
    Ok("S_t = 9 -> 3".into())
}

// ---------------------------------------------------------------- 3

fn gradient_suite() -> Outcome {
    let mut worst = gradcheck::Report::default();
    let mut failures = Vec::new();
    for s in 0..20u64 {
        for (name, r) in ok(gradcheck::suites::layers(s))? {
            if !r.passes() {
                failures.push(format!("{name} seed {s}: {:e}", r.max_rel));
            }
            worst.merge(r);
        }
        let r = ok(gradcheck::suites::shrunken_bm(s))?;
        if !r.passes() {
            failures.push(format!("bm seed {s}: {:e}", r.max_rel));
        }
        worst.merge(r);
    }
    ensure(failures.is_empty(), || failures.join(", "))?;
    Ok(format!(
        "{} derivatives over 20 seeds, max rel err {:e}",
        worst.checked, worst.max_rel
    ))
}

// ---------------------------------------------------------------- 4

fn mask_invariance() -> Outcome {
    let cfg = gradcheck::suites::shrunken_config(3);
    let mut rng = seed::rng(404);
    for pair in 0..200 {
        let mut m = ok(BifurcatingModel::new(cfg.clone(), pair))?;
        let ids: Vec<_> = m.params().ids().collect();
        for id in ids {
            for v in m.params_mut().get_mut(id).data_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        m.mark_fitted();
        let rows = rng.random_range(1..6);
        let steps = rng.random_range(1..8);
        let lengths: Vec<usize> = (0..rows).map(|_| rng.random_range(1..=steps)).collect();
        let mut values = vec![0.0; rows * steps * 5];
        for (r, &len) in lengths.iter().enumerate() {
            for v in &mut values[r * steps * 5..(r * steps + len) * 5] {
                *v = rng.random_range(-3.0..3.0);
            }
        }
        let contexts = (0..rows).map(|_| rng.random_range(0..3)).collect();
        let batch = ok(SequenceBatch::new(values, steps, lengths, contexts))?;
        let padded = batch.with_extra_padding(rng.random_range(1..6));
        let a = ok(m.infer(&batch))?;
        let b = ok(m.infer(&padded))?;
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        ensure(bits(&a.0) == bits(&b.0) && bits(&a.1) == bits(&b.1), || {
            format!("pair {pair} differs")
        })?;
    }
    Ok("200 pairs bit-identical".into())
}

// ---------------------------------------------------------------- 5, 6

struct Sweep {
    data: PreparedDataset,
    outputs: BTreeMap<u8, ExperimentOutput>,
    elapsed: Duration,
}

fn full_sweep(cfg: &PipelineConfig) -> bifurcate::Result<Sweep> {
    let start = Instant::now();
    let histories = pipeline::simulate(cfg)?;
    let data = prepare(
        &histories,
        cfg.n_games(),
        &cfg.prep,
        seed::derive(cfg.seed, "prep", &[]),
    )?;
    let mut outputs = BTreeMap::new();
    for e in [1, 2, 3] {
        outputs.insert(e, run_experiment(e, &data, cfg)?);
    }
    Ok(Sweep {
        data,
        outputs,
        elapsed: start.elapsed(),
    })
}

fn mean_of(out: &ExperimentOutput, game: usize, model: ModelKind, metric: Metric) -> Result<f64, String> {
    out.table.get(game, model, metric).map(|r| r.mean).ok_or_else(|| {
        format!(
            "experiment {} has no {model} {} for game {game}",
            out.experiment,
            metric.name()
        )
    })
}

fn mm_baseline(sweep: &Sweep) -> Outcome {
    let mut pooled_f1 = Vec::new();
    for (e, out) in &sweep.outputs {
        let mut pooled = ConfusionMatrix::default();
        for fc in out.fold_confusions.iter().filter(|c| c.model == ModelKind::Mm) {
            for t in 0..2 {
                for p in 0..2 {
                    pooled.counts[t][p] += fc.confusion.counts[t][p];
                }
            }
        }
        let f1 = pooled.macro_f1();
        ensure((f1 - 0.5).abs() <= 0.02, || {
            format!("experiment {e}: pooled MM macro-F1 {f1:.4}")
        })?;
        pooled_f1.push(f1);
        for g in 0..sweep.data.n_games {
            let mm = mean_of(out, g, ModelKind::Mm, Metric::Smape)?;
            for &m in out
                .roster
                .iter()
                .filter(|m| **m != ModelKind::Mm && m.estimates_survival())
            {
                let v = mean_of(out, g, m, Metric::Smape)?;
                ensure(mm > v, || {
                    format!("experiment {e} game {g}: MM SMAPE {mm:.4} <= {m} {v:.4}")
                })?;
            }
        }
    }
    Ok(format!(
        "pooled MM macro-F1 {}; MM SMAPE above every model in every game",
        pooled_f1
            .iter()
            .map(|f| format!("{f:.3}"))
            .collect::<Vec<_>>()
            .join("/")
    ))
}

fn model_ordering(sweep: &Sweep, cfg: &PipelineConfig) -> Outcome {
    const LIMIT: Duration = Duration::from_secs(15 * 60);
    ensure(cfg.synth.games.iter().all(|g| g.reward_signal_strength >= 0.7), || {
        "a default profile has reward_signal_strength below 0.7".into()
    })?;
    let users: Vec<usize> = (0..sweep.data.n_games)
        .map(|g| sweep.data.examples.iter().filter(|e| e.game_id == g).count())
        .collect();
    ensure(users.iter().all(|&n| n == 2000), || format!("users per game {users:?}"))?;
    let exp3 = &sweep.outputs[&3];
    let mut min_f1_gap = f64::INFINITY;
    let mut min_smape_gap = f64::INFINITY;
    for g in 0..sweep.data.n_games {
        let bm_f1 = mean_of(exp3, g, ModelKind::Bm, Metric::MacroF1)?;
        let mm_f1 = mean_of(exp3, g, ModelKind::Mm, Metric::MacroF1)?;
        let bm_s = mean_of(exp3, g, ModelKind::Bm, Metric::Smape)?;
        let mm_s = mean_of(exp3, g, ModelKind::Mm, Metric::Smape)?;
        ensure(bm_f1 - mm_f1 >= 0.10, || {
            format!("game {g}: BM - MM macro-F1 {:.4}", bm_f1 - mm_f1)
        })?;
        ensure(mm_s - bm_s >= 0.05, || {
            format!("game {g}: MM - BM SMAPE {:.4}", mm_s - bm_s)
        })?;
        for e in [1, 2] {
            let out = &sweep.outputs[&e];
            let mlpc = mean_of(out, g, ModelKind::MlpC, Metric::MacroF1)?;
            let lr = mean_of(out, g, ModelKind::Lr, Metric::MacroF1)?;
            let mm = mean_of(out, g, ModelKind::Mm, Metric::MacroF1)?;
            ensure(bm_f1 >= mlpc && mlpc >= lr && lr > mm, || {
                format!("game {g}, experiment {e}: F1 BM {bm_f1:.4} MLPc {mlpc:.4} LR {lr:.4} MM {mm:.4}")
            })?;
            let mlpr = mean_of(out, g, ModelKind::MlpR, Metric::Smape)?;
            let en = mean_of(out, g, ModelKind::En, Metric::Smape)?;
            let mm = mean_of(out, g, ModelKind::Mm, Metric::Smape)?;
            ensure(bm_s <= mlpr && mlpr <= en && en < mm, || {
                format!("game {g}, experiment {e}: SMAPE BM {bm_s:.4} MLPr {mlpr:.4} EN {en:.4} MM {mm:.4}")
            })?;
            min_f1_gap = min_f1_gap.min(bm_f1 - mlpc);
            min_smape_gap = min_smape_gap.min(mlpr - bm_s);
        }
    }
    ensure(sweep.elapsed < LIMIT, || format!("sweep took {:?}", sweep.elapsed))?;
    Ok(format!(
        "orderings hold in {} games vs experiments 1 and 2; tightest BM-MLPc F1 {min_f1_gap:.4}, MLPr-BM SMAPE {min_smape_gap:.4}; sweep {:.0} s on {} threads",
        sweep.data.n_games,
        sweep.elapsed.as_secs_f64(),
        rayon::current_num_threads()
    ))
}

// ---------------------------------------------------------------- 7

fn mc_contract(sweep: &Sweep, cfg: &PipelineConfig) -> Outcome {
    const PROBES: usize = 20;
    ensure(cfg.experiments.mc_samples == 50, || {
        format!("configured samples {}", cfg.experiments.mc_samples)
    })?;
    let exp3 = &sweep.outputs[&3];
    let fp = exp3
        .predictions
        .iter()
        .find(|p| p.model == ModelKind::Bm && p.fold == 0)
        .ok_or("no BM predictions for fold 0")?;
    for d in fp.predictions.mc.as_ref().ok_or("BM fold without MC draws")? {
        ensure(d.survival_samples.len() == 50 && d.churn_samples.len() == 50, || {
            format!("{} samples in the evaluation run", d.survival_samples.len())
        })?;
    }
    let ck = fp.predictions.checkpoint.as_ref().ok_or("BM fold without checkpoint")?;
    let mut model = ok(BifurcatingModel::from_checkpoint(ck))?;
    let fold = ok(FoldData::build(&sweep.data, Partition::Validation, 0, Format::Sequence))?;
    let probes: Vec<_> = fold.test.iter().take(PROBES).copied().collect();
    let seqs = probes
        .iter()
        .map(|e| fold.fit.padded(e))
        .collect::<bifurcate::Result<Vec<_>>>();
    let seqs = ok(seqs)?;
    let contexts: Vec<usize> = probes.iter().map(|e| e.game_id).collect();

    let small = ok(model.predict_mc(&seqs, &contexts, 50, 1))?;
    let large = ok(model.predict_mc(&seqs, &contexts, 2000, 2))?;
    let mut worst_z: f64 = 0.0;
    for (u, (s, l)) in small.iter().zip(&large).enumerate() {
        ensure(s.survival_samples.len() == 50, || {
            format!("user {u}: {} samples", s.survival_samples.len())
        })?;
        for (point, samples) in [
            (s.survival_point, &s.survival_samples),
            (s.churn_point, &s.churn_samples),
        ] {
            let mean = samples.iter().sum::<f64>() / samples.len() as f64;
            ensure((point - mean).abs() <= 1e-12 * mean.abs().max(1.0), || {
                format!("user {u}: point {point} vs sample mean {mean}")
            })?;
        }
        for (a, b, sd) in [
            (s.survival_point, l.survival_point, l.survival_std),
            (s.churn_point, l.churn_point, l.churn_std),
        ] {
            let se = sd / 50f64.sqrt();
            let z = if se == 0.0 {
                if a == b {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (a - b).abs() / se
            };
            ensure(z <= 3.0, || {
                format!("user {u}: 50-sample mean {a} is {z:.2} SE from {b}")
            })?;
            worst_z = worst_z.max(z);
        }
    }
    model.config.dropout = 0.0;
    for d in ok(model.predict_mc(&seqs, &contexts, 50, 3))? {
        ensure(d.survival_std == 0.0 && d.churn_std == 0.0, || {
            "dispersion at dropout 0".into()
        })?;
    }
    Ok(format!(
        "{PROBES} probes, largest deviation {worst_z:.2} SE; zero dispersion at rate 0"
    ))
}

// ---------------------------------------------------------------- 8

fn f1_from_counts(c: &[[u64; 2]; 2]) -> f64 {
    let f1 = |k: usize| {
        let tp = c[k][k] as f64;
        let fp = c[1 - k][k] as f64;
        let fn_ = c[k][1 - k] as f64;
        if tp == 0.0 {
            0.0
        } else {
            2.0 * tp / (2.0 * tp + fp + fn_)
        }
    };
    (f1(0) + f1(1)) / 2.0
}

fn report_consistency(sweep: &Sweep, dir: &Path) -> Outcome {
    let names = PipelineConfig::default_config().game_names();
    let mut checked = 0;
    for (e, out) in &sweep.outputs {
        ok(write_experiment(out, &names, dir))?;
        let confusions = ok(read_fold_confusions(&fold_confusion_path(dir, *e)))?;
        let metrics = ok(read_fold_metrics(&fold_metrics_path(dir, *e)))?;
        let reported: BTreeMap<_, f64> = metrics
            .iter()
            .filter(|m| m.metric == Metric::MacroF1)
            .map(|m| ((m.fold, m.game_id, m.model), m.value))
            .collect();
        ensure(reported.len() == confusions.len(), || {
            format!("experiment {e}: count mismatch")
        })?;
        let mut per_cell: BTreeMap<(usize, ModelKind), Vec<f64>> = BTreeMap::new();
        for c in &confusions {
            let recomputed = f1_from_counts(&c.confusion.counts);
            let key = (c.fold, c.game_id, c.model);
            let r = *reported
                .get(&key)
                .ok_or_else(|| format!("experiment {e}: no metric for {key:?}"))?;
            ensure((recomputed - r).abs() <= 1e-12, || {
                format!("experiment {e} {key:?}: {recomputed} vs {r}")
            })?;
            per_cell.entry((c.game_id, c.model)).or_default().push(recomputed);
            checked += 1;
        }
        for ((g, m), v) in per_cell {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let table = mean_of(out, g, m, Metric::MacroF1)?;
            ensure((mean - table).abs() <= 1e-12, || {
                format!("experiment {e} game {g} {m}: {mean} vs table {table}")
            })?;
        }
    }
    Ok(format!(
        "{checked} fold confusion matrices agree with fold and table macro-F1"
    ))
}

// ---------------------------------------------------------------- 9

/// Shrunken configuration for repeated end-to-end runs.
fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default_config();
    cfg.synth.users_per_game = 500;
    cfg.prep.per_class = Some(100);
    cfg.training.mlp_max_epochs = 15;
    cfg.training.bm_max_epochs = 3;
    cfg.training.bm_embedding_dim = 8;
    cfg.training.bm_fusion_dim = 8;
    cfg.training.bm_lstm_units = 12;
    cfg.training.bm_head_units = 16;
    cfg
}

fn end_to_end(cfg: &PipelineConfig, root: &Path, threads: usize) -> Result<(), String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| e.to_string())?;
    let run = pool.install(|| -> bifurcate::Result<()> {
        let ws = Workspace::new(root);
        pipeline::synth(cfg, &ws.sessions_dir())?;
        let meta = pipeline::prep(cfg, &ws.sessions_dir(), &ws.prepared_dir())?;
        pipeline::train(cfg, &ws.prepared_dir(), &ws.model_path())?;
        pipeline::evaluate(cfg, &ws.prepared_dir(), &ws.results_dir(), &[1, 2, 3])?;
        pipeline::report(&ws.results_dir(), &meta.game_names)?;
        Ok(())
    });
    ok(run)
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).into_iter().flatten().flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism(base: &Path) -> Outcome {
    let cfg = small_config();
    let roots = [base.join("one-thread"), base.join("three-threads")];
    end_to_end(&cfg, &roots[0], 1)?;
    end_to_end(&cfg, &roots[1], 3)?;
    let files = files_under(&roots[0]);
    let other = files_under(&roots[1]);
    ensure(files == other, || "the runs wrote different file sets".into())?;
    for area in ["results/tables", "results/figures", "results/checkpoints", "model"] {
        ensure(files.iter().any(|f| f.starts_with(area)), || {
            format!("no files under {area}")
        })?;
    }
    for f in &files {
        let a = std::fs::read(roots[0].join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(roots[1].join(f)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{} differs", f.display()))?;
    }
    Ok(format!("{} files byte-identical across 1 and 3 workers", files.len()))
}

// ---------------------------------------------------------------- 10

fn leakage_audit(sweep: &Sweep, cfg: &PipelineConfig) -> Outcome {
    let mut fits = 0;
    for (e, out) in &sweep.outputs {
        ok(audit_fold_fits(&sweep.data, &out.fits)).map_err(|m| format!("experiment {e}: {m}"))?;
        fits += out.fits.len();
    }
    // label-defining thresholds come from the filtered population alone
    let histories = ok(pipeline::simulate(cfg))?;
    let filtered = filter_outlier_users(&histories, cfg.prep.outlier_percentile);
    let recomputed = ok(game_thresholds(&filtered))?;
    ensure(recomputed == sweep.data.thresholds, || {
        "stored thresholds do not recompute".into()
    })?;

    // a statistic that saw one held-out user must be rejected
    let out = &sweep.outputs[&3];
    let mut tampered = out.fits.clone();
    let target = tampered
        .iter_mut()
        .find(|f| f.partition == Partition::Validation)
        .ok_or("no validation fits")?;
    let by_id: BTreeMap<&str, _> = sweep.data.examples.iter().map(|e| (e.user_id.as_str(), e)).collect();
    let mut rows: Vec<_> = target.fit.training_ids.iter().map(|id| by_id[id.as_str()]).collect();
    rows.push(by_id[target.test_ids[0].as_str()]);
    let leaked = ok(FeatureFit::fit(&rows, sweep.data.n_games))?;
    target.fit.quartiles = leaked.quartiles;
    target.fit.max_len = leaked.max_len;
    ensure(audit_fold_fits(&sweep.data, &tampered).is_err(), || {
        "a validation-derived statistic passed the audit".into()
    })?;
    let mut tampered = out.fits.clone();
    let target = tampered
        .iter_mut()
        .find(|f| f.partition == Partition::Validation)
        .unwrap();
    let leaked_id = target.test_ids[0].clone();
    target.fit.training_ids.push(leaked_id);
    ensure(audit_fold_fits(&sweep.data, &tampered).is_err(), || {
        "a held-out training id passed the audit".into()
    })?;
    Ok(format!(
        "{fits} fold fits recompute from training folds; leaked statistics rejected"
    ))
}

#[test]
fn acceptance_criteria() {
    let mut ledger = Ledger { lines: Vec::new() };
    ledger.run(1, "formula oracles", formula_oracles);
    ledger.run(2, "cutoff anchor", cutoff_anchor);
    ledger.run(3, "gradient checks", gradient_suite);
    ledger.run(4, "mask invariance", mask_invariance);

    let cfg = PipelineConfig::default_config();
    let sweep = full_sweep(&cfg);
    match &sweep {
        Ok(sweep) => {
            ledger.run(5, "MM baseline", || mm_baseline(sweep));
            ledger.run(6, "model ordering", || model_ordering(sweep, &cfg));
            ledger.run(7, "MC dropout contract", || mc_contract(sweep, &cfg));
            let dir = tempfile::tempdir().expect("temporary directory");
            ledger.run(8, "confusion/report consistency", || {
                report_consistency(sweep, dir.path())
            });
            ledger.run(10, "no-leakage audit", || leakage_audit(sweep, &cfg));
        }
        Err(e) => {
            for (id, name) in [
                (5, "MM baseline"),
                (6, "model ordering"),
                (7, "MC dropout contract"),
                (8, "confusion/report consistency"),
                (10, "no-leakage audit"),
            ] {
                ledger.run(id, name, || Err(format!("sweep failed: {e}")));
            }
        }
    }
    drop(sweep);
    let dir = tempfile::tempdir().expect("temporary directory");
    ledger.run(9, "determinism", || determinism(dir.path()));

    let failed: Vec<&String> = ledger.lines.iter().filter(|(p, _)| !p).map(|(_, l)| l).collect();
    println!(
        "{} of {} criteria passed",
        ledger.lines.len() - failed.len(),
        ledger.lines.len()
    );
    assert!(
        failed.is_empty(),
        "failed criteria:\n{}",
        failed.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("\n")
    );
}
