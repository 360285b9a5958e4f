//! Invariants of every module, checked on random inputs.

mod common;

use std::collections::BTreeMap;

use bifurcate::dataprep::{
    compute_cutoff, fit_quartiles, game_thresholds, label_churn, op_bucket, prepare, robust_rescale, PrepConfig,
    PreparedDataset,
};
use bifurcate::engine::{loss, Graph, Mode, Tensor};
use bifurcate::experiments::{FoldMetric, Metric, ModelKind, PipelineConfig, ResultTable};
use bifurcate::metrics::{confusion_matrix, macro_f1, smape_eval};
use bifurcate::models::{BifurcatingModel, BmConfig, ElasticNet, Matrix, SequenceBatch};
use bifurcate::seed;
use bifurcate::telemetry::{
    emit_dataset, generate_population, load_dataset, GameProfile, PlayerHistory, SessionRecord,
};
use proptest::prelude::*;
use rand::Rng;

fn profile(game_id: usize) -> GameProfile {
    PipelineConfig::default_config().synth.games[game_id].clone()
}

fn default_prepared(users_per_game: usize) -> PreparedDataset {
    let cfg = PipelineConfig::default_config();
    let mut histories = Vec::new();
    for g in &cfg.synth.games {
        histories.extend(generate_population(g, users_per_game, 11).unwrap());
    }
    prepare(&histories, cfg.n_games(), &PrepConfig::default(), 5).unwrap()
}

// ---------------------------------------------------------------- telemetry

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_records_satisfy_their_invariants(
        game in 0usize..6,
        strength in 0.0f64..=1.0,
        lo in 0.5f64..0.9,
        width in 0.0f64..0.09,
        seed_value in any::<u64>(),
    ) {
        let mut p = profile(game);
        p.reward_signal_strength = strength;
        p.engagement_decay_range = (lo, lo + width);
        for h in generate_population(&p, 40, seed_value).unwrap() {
            prop_assert!(h.validate().is_ok());
            prop_assert_eq!(h.sessions[0].delta_session, 0.0);
            for w in h.sessions.windows(2) {
                prop_assert!(w[1].session_index > w[0].session_index);
                prop_assert!(w[1].session_start >= w[0].session_start);
            }
        }
    }
}

#[test]
fn emitted_session_files_are_byte_identical_for_one_seed() {
    let p = profile(2);
    let names: BTreeMap<usize, String> = [(2, p.name.clone())].into();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let h = generate_population(&p, 300, 42).unwrap();
        emit_dataset(&h, &names, d.path()).unwrap();
    }
    for file in ["sessions.csv", "sessions.meta.json"] {
        let a = std::fs::read(dirs[0].path().join(file)).unwrap();
        let b = std::fs::read(dirs[1].path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }
}

#[test]
fn emitted_sessions_load_back_unchanged() {
    let p = profile(4);
    let names: BTreeMap<usize, String> = [(4, p.name.clone())].into();
    let dir = tempfile::tempdir().unwrap();
    let written = generate_population(&p, 200, 3).unwrap();
    emit_dataset(&written, &names, dir.path()).unwrap();
    let (read, meta) = load_dataset(dir.path()).unwrap();
    assert_eq!(meta.games.len(), 1);
    assert_eq!(meta.users.len(), written.len());
    assert_eq!(read.len(), written.len());
    for (a, b) in read.iter().zip(&written) {
        assert_eq!(a.user_id, b.user_id);
        assert_eq!(a.completion_session_index, b.completion_session_index);
        assert_eq!(a.sessions.len(), b.sessions.len());
        for (x, y) in a.sessions.iter().zip(&b.sessions) {
            assert_eq!(x.session_index, y.session_index);
            assert_eq!(x.activity_index, y.activity_index);
            assert!((x.session_start - y.session_start).abs() <= 1e-3);
            assert!((x.play_time - y.play_time).abs() <= 1e-3);
        }
    }
}

#[test]
fn non_churners_play_longer_early_on() {
    let k = 3;
    for game in 0..6 {
        let p = profile(game);
        assert!(p.reward_signal_strength > 0.5);
        let pop = generate_population(&p, 2000, 9).unwrap();
        let thresholds = game_thresholds(&pop).unwrap();
        let threshold = thresholds[&p.game_id].threshold;
        let (mut churn, mut stay) = (Vec::new(), Vec::new());
        for h in &pop {
            let early: Vec<f64> = h.sessions.iter().take(k).map(|s| s.play_time).collect();
            let m = early.iter().sum::<f64>() / early.len() as f64;
            if label_churn(h, threshold) {
                churn.push(m);
            } else {
                stay.push(m);
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&stay) > mean(&churn),
            "{}: non-churners {} vs churners {}",
            p.name,
            mean(&stay),
            mean(&churn)
        );
    }
}

// ---------------------------------------------------------------- dataprep

proptest! {
    #[test]
    fn cutoff_never_exceeds_a_third_of_either_count(total in 1usize..500, frac in 0.0f64..=1.0, has in any::<bool>()) {
        let completion = has.then(|| ((total as f64 * frac).ceil() as usize).clamp(1, total));
        let c = compute_cutoff(total, completion).unwrap();
        prop_assert!(c >= 1 && c <= total);
        prop_assert!(c <= total.div_ceil(3));
        if let Some(sc) = completion {
            prop_assert!(c <= sc.div_ceil(3));
        }
    }

    #[test]
    fn rescaled_training_vector_has_unit_spread(values in prop::collection::vec(-1e4f64..1e4, 4..60)) {
        let q = fit_quartiles(&values).unwrap();
        prop_assume!(q.q3 != q.q1);
        let (scaled, _) = robust_rescale(&values, None).unwrap();
        let r = fit_quartiles(&scaled).unwrap();
        prop_assert!(r.q2.abs() < 1e-9);
        prop_assert!((r.q3 - r.q1 - 1.0).abs() < 1e-9);
    }
}

fn session(index: usize, start: f64, length: f64, gap: f64) -> SessionRecord {
    SessionRecord {
        user_id: "u".into(),
        game_id: 0,
        session_index: index,
        session_start: start,
        session_time: length,
        play_time: length / 2.0,
        delta_session: gap,
        activity_index: 4,
        activity_diversity: 2,
    }
}

/// A history whose sessions start at `starts`, each `length` minutes long.
fn history(starts: &[f64], length: f64, completion: Option<usize>, snapshot: f64) -> PlayerHistory {
    let sessions = starts
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let gap = if i == 0 { 0.0 } else { s - (starts[i - 1] + length) };
            session(i, s, length, gap)
        })
        .collect();
    PlayerHistory {
        user_id: "u".into(),
        game_id: 0,
        sessions,
        completed_game: completion.is_some(),
        completion_session_index: completion,
        snapshot_time: snapshot,
    }
}

#[test]
fn churn_labels_match_a_literal_reading_of_both_criteria() {
    let threshold = 500.0;
    let cases = [
        history(&[0.0], 10.0, None, 10.0),
        history(&[0.0], 10.0, None, 509.0),
        history(&[0.0], 10.0, None, 510.0),
        history(&[0.0], 10.0, None, 511.0),
        history(&[0.0], 10.0, Some(0), 5000.0),
        history(&[0.0, 100.0, 200.0], 10.0, None, 710.0),
        history(&[0.0, 100.0, 200.0], 10.0, None, 709.9),
        history(&[0.0, 100.0, 200.0], 10.0, Some(2), 1e6),
        history(&[0.0, 100.0, 200.0], 10.0, Some(1), 1e6),
        history(&[0.0, 1000.0, 3000.0], 30.0, None, 3030.0),
        history(&[0.0, 1000.0, 3000.0], 30.0, None, 1e5),
        history(&[0.0, 50.0, 60.0, 70.0], 5.0, None, 575.0),
        history(&[0.0, 50.0, 60.0, 70.0], 5.0, None, 574.0),
        history(&[0.0, 50.0, 60.0, 70.0], 5.0, Some(3), 575.0),
        history(&[10.0, 20.0], 1.0, None, 521.0),
        history(&[10.0, 20.0], 1.0, None, 520.5),
    ];
    for (i, h) in cases.iter().enumerate() {
        assert!(h.validate().is_ok(), "case {i} is malformed");
        let last = h.sessions.last().unwrap();
        let inactive_for = h.snapshot_time - (last.session_start + last.session_time);
        let expected = !h.completed_game && inactive_for >= threshold;
        assert_eq!(label_churn(h, threshold), expected, "case {i}");
    }
}

#[test]
fn split_plan_invariants_on_a_prepared_corpus() {
    let data = default_prepared(2500);
    let plan = &data.plan;
    assert!(plan.tuning_ids.is_disjoint(&plan.validation_ids));
    assert_eq!(plan.tuning_ids.len() + plan.validation_ids.len(), data.examples.len());

    // per-stratum tuning share within one user of 20 %
    let mut strata: BTreeMap<(usize, bool, usize), (usize, usize)> = BTreeMap::new();
    for ex in &data.examples {
        let e = strata
            .entry((ex.game_id, ex.churn, op_bucket(ex.op_length)))
            .or_default();
        e.0 += 1;
        if plan.tuning_ids.contains(&ex.user_id) {
            e.1 += 1;
        }
    }
    for (key, (n, tune)) in &strata {
        assert!(
            (*tune as f64 - 0.2 * *n as f64).abs() <= 1.0,
            "stratum {key:?}: {tune} of {n}"
        );
    }

    // churner fraction per OP bucket: tuning vs validation
    for bucket in 1..=4 {
        let frac = |tuning: bool| {
            let members: Vec<_> = data
                .examples
                .iter()
                .filter(|e| op_bucket(e.op_length) == bucket && plan.tuning_ids.contains(&e.user_id) == tuning)
                .collect();
            members.iter().filter(|e| e.churn).count() as f64 / members.len().max(1) as f64
        };
        let d = (frac(true) - frac(false)).abs();
        assert!(d < 0.03, "bucket {bucket}: churner fractions differ by {d}");
    }

    // every fold keeps each game's churner ratio within 2 %
    for tuning in [true, false] {
        for fold in 0..plan.n_folds {
            let (_, test) = plan.fold_indices(&data.examples, tuning, fold);
            for g in 0..data.n_games {
                let rows: Vec<_> = test
                    .iter()
                    .map(|&i| &data.examples[i])
                    .filter(|e| e.game_id == g)
                    .collect();
                let ratio = rows.iter().filter(|e| e.churn).count() as f64 / rows.len() as f64;
                assert!(
                    (ratio - 0.5).abs() <= 0.02,
                    "tuning={tuning} fold {fold} game {g}: {ratio}"
                );
            }
        }
    }
}

// ---------------------------------------------------------------- engine

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lstm_output_ignores_trailing_padding(
        seed_value in any::<u64>(),
        batch in 1usize..5,
        steps in 1usize..6,
        extra in 1usize..5,
    ) {
        let mut rng = seed::rng(seed_value);
        let (f, h) = (3, 4);
        let lengths: Vec<usize> = (0..batch).map(|_| rng.random_range(1..=steps)).collect();
        let x: Vec<f64> = (0..batch * steps * f).map(|_| rng.random_range(-2.0..2.0)).collect();
        let wi: Vec<f64> = (0..f * 4 * h).map(|_| rng.random_range(-0.5..0.5)).collect();
        let wh: Vec<f64> = (0..h * 4 * h).map(|_| rng.random_range(-0.5..0.5)).collect();
        let b: Vec<f64> = (0..4 * h).map(|_| rng.random_range(-0.5..0.5)).collect();
        let run = |xs: Vec<f64>, t: usize| {
            let mut g = Graph::new();
            let xv = g.constant(vec![batch, t, f], xs).unwrap();
            let wiv = g.constant(vec![f, 4 * h], wi.clone()).unwrap();
            let whv = g.constant(vec![h, 4 * h], wh.clone()).unwrap();
            let bv = g.constant(vec![4 * h], b.clone()).unwrap();
            let out = g.lstm(xv, &lengths, wiv, whv, bv).unwrap();
            g.value(out).to_vec()
        };
        let mut padded = Vec::new();
        for row in x.chunks(steps * f) {
            padded.extend_from_slice(row);
            // padding content must not matter either
            padded.extend((0..extra * f).map(|_| rng.random_range(-9.0..9.0)));
        }
        let a = run(x, steps);
        let c = run(padded, steps + extra);
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), c.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn losses_are_non_negative_and_vanish_on_a_match(
        pred in prop::collection::vec(0.0f64..50.0, 1..30),
        shift in prop::collection::vec(-5.0f64..5.0, 30),
    ) {
        let target: Vec<f64> = pred.iter().zip(&shift).map(|(p, s)| (p + s).max(0.0)).collect();
        prop_assert!(loss::mse(&pred, &target).unwrap() >= 0.0);
        prop_assert!(loss::smape(&pred, &target).unwrap() >= 0.0);
        prop_assert_eq!(loss::mse(&pred, &pred).unwrap(), 0.0);
        prop_assert_eq!(loss::smape(&pred, &pred).unwrap(), 0.0);
        if pred != target {
            prop_assert!(loss::mse(&pred, &target).unwrap() > 0.0);
            prop_assert!(loss::smape(&pred, &target).unwrap() > 0.0);
        }
        let probs: Vec<f64> = pred.iter().map(|p| p / 50.0).collect();
        let labels: Vec<f64> = shift.iter().take(probs.len()).map(|s| f64::from(u8::from(*s > 0.0))).collect();
        prop_assert!(loss::bce(&probs, &labels).unwrap() >= 0.0);
        // an exact match is zero up to the probability clip
        prop_assert!(loss::bce(&labels, &labels).unwrap() <= 1.1e-7);
    }
}

#[test]
fn inverted_dropout_preserves_the_mean() {
    let x = [1.0, -2.5, 0.3, 7.0];
    for rate in [0.1, 0.3, 0.5] {
        let mut rng = seed::rng(77);
        let mut sums = [0.0; 4];
        let draws = 100_000;
        for _ in 0..draws {
            let mut g = Graph::new();
            let v = g.constant(vec![4], x.to_vec()).unwrap();
            let d = g.dropout(v, rate, true, &mut rng).unwrap();
            for (s, o) in sums.iter_mut().zip(g.value(d)) {
                *s += o;
            }
        }
        for (s, xi) in sums.iter().zip(x) {
            let mean = s / draws as f64;
            assert!(((mean - xi) / xi).abs() < 0.01, "rate {rate}: mean {mean} vs {xi}");
        }
    }
}

fn toy_batch(rng: &mut impl Rng, rows: usize, steps: usize, n_games: usize) -> SequenceBatch {
    let lengths: Vec<usize> = (0..rows).map(|_| rng.random_range(1..=steps)).collect();
    let mut values = vec![0.0; rows * steps * 5];
    for (r, &len) in lengths.iter().enumerate() {
        for v in &mut values[r * steps * 5..(r * steps + len) * 5] {
            *v = rng.random_range(-2.0..2.0);
        }
    }
    let contexts = (0..rows).map(|_| rng.random_range(0..n_games)).collect();
    SequenceBatch::new(values, steps, lengths, contexts).unwrap()
}

fn small_bm(n_games: usize, seed_value: u64) -> BifurcatingModel {
    let cfg = BmConfig {
        embedding_dim: 4,
        fusion_dim: 6,
        lstm_units: 8,
        head_units: 10,
        ..BmConfig::new(n_games)
    };
    let mut m = BifurcatingModel::new(cfg, seed_value).unwrap();
    let mut rng = seed::rng(seed_value ^ 0x5eed);
    let ids: Vec<_> = m.params().ids().collect();
    for id in ids {
        for v in m.params_mut().get_mut(id).data_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
    // one training-mode pass moves the batch-norm running statistics
    let batch = toy_batch(&mut rng, 16, 5, n_games);
    m.forward(&batch, Mode::Train, &mut rng).unwrap();
    m.mark_fitted();
    m
}

#[test]
fn inference_with_frozen_statistics_is_bit_identical() {
    let m = small_bm(3, 1);
    let batch = toy_batch(&mut seed::rng(2), 12, 6, 3);
    let a = m.infer(&batch).unwrap();
    let b = m.infer(&batch).unwrap();
    assert_eq!(a, b);
}

// ---------------------------------------------------------------- models

#[test]
fn heads_are_isolated() {
    let batch = toy_batch(&mut seed::rng(3), 20, 5, 3);
    for (zeroed, survival_head) in [("survival", true), ("churn", false)] {
        let base = small_bm(3, 4);
        let (s0, c0) = base.infer(&batch).unwrap();
        let mut m = base.clone();
        for name in m.head_param_names(survival_head) {
            let id = m.params().find(&name).unwrap();
            m.params_mut().get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let (s1, c1) = m.infer(&batch).unwrap();
        if survival_head {
            assert_eq!(c0, c1, "zeroing the {zeroed} head moved churn outputs");
            assert_ne!(s0, s1);
        } else {
            assert_eq!(s0, s1, "zeroing the {zeroed} head moved survival outputs");
            assert_ne!(c0, c1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn churn_probabilities_lie_strictly_inside_the_unit_interval(seed_value in any::<u64>()) {
        let m = small_bm(2, seed_value);
        let batch = toy_batch(&mut seed::rng(seed_value.wrapping_add(1)), 24, 4, 2);
        let (_, c) = m.infer(&batch).unwrap();
        prop_assert!(c.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn elastic_net_solution_satisfies_kkt(
        seed_value in any::<u64>(),
        alpha in 0.001f64..1.0,
        rho in 0.05f64..=1.0,
    ) {
        let mut rng = seed::rng(seed_value);
        let (n, d) = (60, 6);
        let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w_true: Vec<f64> = (0..d).map(|j| if j % 2 == 0 { rng.random_range(-2.0..2.0) } else { 0.0 }).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| (0..d).map(|j| x[i * d + j] * w_true[j]).sum::<f64>() + rng.random_range(-0.3..0.3))
            .collect();
        let xm = Matrix::new(n, d, x.clone()).unwrap();
        let mut en = ElasticNet::new(alpha, rho).unwrap();
        en.tol = 1e-12;
        en.fit(&xm, &y).unwrap();
        let w = en.weights.clone().unwrap();
        let resid: Vec<f64> = (0..n)
            .map(|i| y[i] - en.intercept - (0..d).map(|j| x[i * d + j] * w[j]).sum::<f64>())
            .collect();
        for j in 0..d {
            let smooth = -(0..n).map(|i| x[i * d + j] * resid[i]).sum::<f64>() / n as f64 + alpha * (1.0 - rho) * w[j];
            if w[j] == 0.0 {
                prop_assert!(smooth.abs() <= alpha * rho + 1e-4, "w[{}] = 0 with gradient {}", j, smooth);
            } else {
                prop_assert!((smooth + alpha * rho * w[j].signum()).abs() <= 1e-4);
            }
        }
    }
}

#[test]
fn mc_dispersion_grows_with_the_dropout_rate() {
    let mut m = small_bm(2, 8);
    let batch = toy_batch(&mut seed::rng(9), 40, 4, 2);
    let seqs: Vec<_> = (0..batch.len())
        .map(|r| {
            let s = &batch.values[r * batch.steps * 5..(r + 1) * batch.steps * 5];
            bifurcate::dataprep::PaddedSequence {
                values: s.to_vec(),
                mask: (0..batch.steps).map(|t| t < batch.lengths[r]).collect(),
            }
        })
        .collect();
    let mut spread = Vec::new();
    for rate in [0.05, 0.3] {
        m.config.dropout = rate;
        let d = m.predict_mc(&seqs, &batch.contexts, 50, 10).unwrap();
        spread.push(d.iter().map(|e| e.survival_std + e.churn_std).sum::<f64>() / d.len() as f64);
    }
    assert!(spread[1] > spread[0], "{spread:?}");
}

#[test]
fn bm_training_lowers_the_monitored_loss() {
    let data = default_prepared(1200);
    let fit = bifurcate::dataprep::FeatureFit::fit(&data.examples.iter().collect::<Vec<_>>(), data.n_games).unwrap();
    let seqs: Vec<_> = data.examples.iter().map(|e| fit.padded(e).unwrap()).collect();
    let contexts: Vec<usize> = data.examples.iter().map(|e| e.game_id).collect();
    let survival: Vec<f64> = data.examples.iter().map(|e| e.survival).collect();
    let churn: Vec<bool> = data.examples.iter().map(|e| e.churn).collect();
    let cfg = BmConfig {
        embedding_dim: 8,
        fusion_dim: 8,
        lstm_units: 16,
        head_units: 32,
        max_epochs: 8,
        ..BmConfig::new(data.n_games)
    };
    let mut m = BifurcatingModel::new(cfg, 3).unwrap();
    let log = m.fit(&seqs, &contexts, &survival, &churn).unwrap();
    assert!(
        log.monitor_loss[log.best_epoch] < log.monitor_loss[0],
        "{:?}",
        log.monitor_loss
    );
}

// ---------------------------------------------------------------- metrics

proptest! {
    #[test]
    fn smape_is_symmetric_and_bounded(
        a in prop::collection::vec(0.0f64..1e4, 1..40),
        b in prop::collection::vec(0.0f64..1e4, 40),
    ) {
        let b = &b[..a.len()];
        let ab = smape_eval(&a, b).unwrap();
        let ba = smape_eval(b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn macro_f1_ignores_the_class_encoding(
        pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60),
    ) {
        let (p, t): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
        let np: Vec<bool> = p.iter().map(|v| !v).collect();
        let nt: Vec<bool> = t.iter().map(|v| !v).collect();
        let a = macro_f1(&p, &t).unwrap();
        let b = macro_f1(&np, &nt).unwrap();
        prop_assert!((a - b).abs() <= 1e-15);
        prop_assert!((a - common::oracles::macro_f1(&p, &t)).abs() <= 1e-12);
    }

    #[test]
    fn confusion_rows_are_proportions(
        pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60),
    ) {
        let (p, t): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
        let (norm, counts) = confusion_matrix(&p, &t).unwrap();
        prop_assert_eq!(counts.total() as usize, p.len());
        for (row, c) in norm.iter().zip(&counts.counts) {
            if c[0] + c[1] > 0 {
                prop_assert!((row[0] + row[1] - 1.0).abs() <= 1e-12);
            }
        }
    }
}

// ---------------------------------------------------------------- experiments

proptest! {
    #[test]
    fn result_table_is_recomputable_from_fold_metrics(
        values in prop::collection::vec(0.0f64..1.0, 2..12),
        game in 0usize..6,
    ) {
        let metrics: Vec<FoldMetric> = values
            .iter()
            .enumerate()
            .map(|(fold, &value)| FoldMetric { fold, game_id: game, model: ModelKind::Bm, metric: Metric::MacroF1, value })
            .collect();
        let table = ResultTable::from_fold_metrics(&metrics);
        let row = table.get(game, ModelKind::Bm, Metric::MacroF1).unwrap();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert_eq!(row.n_folds, values.len());
        prop_assert!((row.mean - mean).abs() <= 1e-12);
        prop_assert!((row.std - std).abs() <= 1e-12);
        prop_assert!(row.std >= 0.0);
    }
}

#[test]
fn tensors_reject_inconsistent_shapes() {
    assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
    assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
}
