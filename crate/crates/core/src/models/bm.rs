//! Bifurcating Model: a context embedding and masked LSTM trunk shared by a
//! survival-time head and a churn-probability head, with Monte-Carlo
//! dropout at prediction time.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::target_scale;
use super::training::{batches, monitor_split, EarlyStopping, TrainingLog, BATCH_SIZE, PATIENCE};
use crate::dataprep::features::{interpolated_quantile, PaddedSequence, N_METRICS};
use crate::engine::{
    loss, AdamState, BatchNorm, Checkpoint, CyclicalSchedule, Embedding, Graph, LayerParams, Linear, Lstm, Mode, Var,
};
use crate::error::{Error, Result};
use crate::seed;

pub const CHECKPOINT_KIND: &str = "bifurcating";
pub const MC_SAMPLES: usize = 50;
const INFER_CHUNK: usize = 512;
/// Quantile levels reported for each MC distribution.
pub const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmConfig {
    pub n_games: usize,
    pub embedding_dim: usize,
    pub fusion_dim: usize,
    pub lstm_units: usize,
    pub head_units: usize,
    pub dropout: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub base_lr: f64,
    pub max_lr: f64,
    /// Cyclical half-period in epochs.
    pub step_epochs: usize,
}

impl BmConfig {
    pub fn new(n_games: usize) -> Self {
        BmConfig {
            n_games,
            embedding_dim: 40,
            fusion_dim: 40,
            lstm_units: 100,
            head_units: 300,
            dropout: 0.1,
            batch_size: BATCH_SIZE,
            max_epochs: 60,
            patience: PATIENCE,
            base_lr: 1e-4,
            max_lr: 1e-3,
            step_epochs: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            self.n_games,
            self.embedding_dim,
            self.fusion_dim,
            self.lstm_units,
            self.head_units,
            self.batch_size,
        ];
        if widths.contains(&0) {
            return Err(Error::invalid(
                "model widths, game count and batch size must be positive",
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// A batch of padded sequences `[B, steps, 5]` with valid lengths and
/// game contexts.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    pub values: Vec<f64>,
    pub steps: usize,
    pub lengths: Vec<usize>,
    pub contexts: Vec<usize>,
}

impl SequenceBatch {
    pub fn new(values: Vec<f64>, steps: usize, lengths: Vec<usize>, contexts: Vec<usize>) -> Result<Self> {
        let b = lengths.len();
        if contexts.len() != b {
            return Err(Error::LengthMismatch {
                expected: b,
                actual: contexts.len(),
            });
        }
        if values.len() != b * steps * N_METRICS {
            return Err(Error::LengthMismatch {
                expected: b * steps * N_METRICS,
                actual: values.len(),
            });
        }
        if lengths.iter().any(|&l| l == 0 || l > steps) {
            return Err(Error::invalid("sequence lengths must lie in 1..=steps"));
        }
        Ok(SequenceBatch {
            values,
            steps,
            lengths,
            contexts,
        })
    }

    /// Rows `idx` of `seqs`, trimmed to the longest valid length among them.
    pub fn gather(seqs: &[PaddedSequence], contexts: &[usize], idx: &[usize]) -> Result<Self> {
        let lengths: Vec<usize> = idx.iter().map(|&i| seqs[i].valid_len()).collect();
        let steps = lengths.iter().copied().max().unwrap_or(0);
        let mut values = Vec::with_capacity(idx.len() * steps * N_METRICS);
        for &i in idx {
            let s = &seqs[i];
            if s.values.len() < steps * N_METRICS {
                return Err(Error::Shape("sequence shorter than its mask".into()));
            }
            values.extend_from_slice(&s.values[..steps * N_METRICS]);
        }
        let ctx = idx.iter().map(|&i| contexts[i]).collect();
        Self::new(values, steps, lengths, ctx)
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    /// The same batch with `extra` all-zero steps appended to every row.
    pub fn with_extra_padding(&self, extra: usize) -> Self {
        let steps = self.steps + extra;
        let mut values = Vec::with_capacity(self.len() * steps * N_METRICS);
        for row in self.values.chunks(self.steps * N_METRICS) {
            values.extend_from_slice(row);
            values.extend(std::iter::repeat_n(0.0, extra * N_METRICS));
        }
        SequenceBatch {
            values,
            steps,
            lengths: self.lengths.clone(),
            contexts: self.contexts.clone(),
        }
    }
}

/// All MC samples for one user plus their summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateDistribution {
    pub survival_samples: Vec<f64>,
    pub churn_samples: Vec<f64>,
    pub survival_point: f64,
    pub churn_point: f64,
    pub survival_std: f64,
    pub churn_std: f64,
    /// At [`QUANTILE_LEVELS`].
    pub survival_quantiles: [f64; 5],
    pub churn_quantiles: [f64; 5],
}

fn summarize(samples: &[f64]) -> (f64, f64, [f64; 5]) {
    let n = samples.len() as f64;
    // identical samples summarise exactly, without rounding in the mean
    let mean = if samples.iter().all(|&s| s == samples[0]) {
        samples[0]
    } else {
        samples.iter().sum::<f64>() / n
    };
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut q = [0.0; 5];
    for (o, &l) in q.iter_mut().zip(&QUANTILE_LEVELS) {
        *o = interpolated_quantile(&sorted, l);
    }
    (mean, var.sqrt(), q)
}

impl EstimateDistribution {
    pub fn from_samples(survival_samples: Vec<f64>, churn_samples: Vec<f64>) -> Self {
        let (sp, ss, sq) = summarize(&survival_samples);
        let (cp, cs, cq) = summarize(&churn_samples);
        EstimateDistribution {
            survival_samples,
            churn_samples,
            survival_point: sp,
            churn_point: cp,
            survival_std: ss,
            churn_std: cs,
            survival_quantiles: sq,
            churn_quantiles: cq,
        }
    }

    /// Churn decision at the 0.5 threshold.
    pub fn churns(&self) -> bool {
        self.churn_point >= 0.5
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct Head {
    dense: Linear,
    bn: BatchNorm,
    out: Linear,
}

impl Head {
    fn new<R: Rng + ?Sized>(
        store: &mut LayerParams,
        name: &str,
        input: usize,
        units: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Head {
            dense: Linear::new(store, &format!("{name}.dense"), input, units, rng)?,
            bn: BatchNorm::new(store, &format!("{name}.bn"), units)?,
            out: Linear::new(store, &format!("{name}.out"), units, 1, rng)?,
        })
    }

    /// Dense, ReLU and batch norm with running statistics.
    fn hidden_frozen(&self, g: &mut Graph, store: &LayerParams, x: Var) -> Result<Var> {
        let h = self.dense.forward(g, store, x)?;
        let h = g.relu(h);
        self.bn.forward_frozen(g, store, h)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct Layers {
    embedding: Embedding,
    fusion: Linear,
    lstm: Lstm,
    survival: Head,
    churn: Head,
}

#[derive(Serialize, Deserialize)]
struct BmMeta {
    config: BmConfig,
    seed: u64,
    target_scale: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BifurcatingModel {
    pub config: BmConfig,
    pub seed: u64,
    /// Per-game divisor applied to survival targets before training.
    pub target_scale: Vec<f64>,
    pub log: Option<TrainingLog>,
    store: LayerParams,
    layers: Layers,
    fitted: bool,
}

/// Graph nodes of one training-style forward pass.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub total: Var,
    pub survival: Var,
    pub churn: Var,
}

impl BifurcatingModel {
    pub fn new(config: BmConfig, seed_value: u64) -> Result<Self> {
        config.validate()?;
        let n_games = config.n_games;
        let mut rng = seed::rng_for(seed_value, "bm-init", &[]);
        let mut store = LayerParams::new();
        let embedding = Embedding::new(&mut store, "embedding", config.n_games, config.embedding_dim, &mut rng)?;
        let fusion = Linear::new(
            &mut store,
            "fusion",
            N_METRICS + config.embedding_dim,
            config.fusion_dim,
            &mut rng,
        )?;
        let lstm = Lstm::new(&mut store, "lstm", config.fusion_dim, config.lstm_units, &mut rng)?;
        let survival = Head::new(&mut store, "survival", config.lstm_units, config.head_units, &mut rng)?;
        let churn = Head::new(&mut store, "churn", config.lstm_units, config.head_units, &mut rng)?;
        Ok(BifurcatingModel {
            config,
            seed: seed_value,
            target_scale: vec![1.0; n_games],
            log: None,
            store,
            layers: Layers {
                embedding,
                fusion,
                lstm,
                survival,
                churn,
            },
            fitted: false,
        })
    }

    pub fn params(&self) -> &LayerParams {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut LayerParams {
        &mut self.store
    }

    /// Marks the current parameters as usable for prediction.
    pub fn mark_fitted(&mut self) {
        self.fitted = true;
    }

    /// Parameter names belonging to the survival and churn heads.
    pub fn head_param_names(&self, survival: bool) -> Vec<String> {
        let prefix = if survival { "survival." } else { "churn." };
        self.store
            .named()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(n, _)| n.to_string())
            .collect()
    }

    fn check_contexts(&self, contexts: &[usize]) -> Result<()> {
        match contexts.iter().find(|&&c| c >= self.config.n_games) {
            Some(&c) => Err(Error::UnknownContext {
                game_id: c,
                known: self.config.n_games,
            }),
            None => Ok(()),
        }
    }

    /// Embedding, per-step fusion and the masked LSTM: `[B, lstm_units]`.
    fn trunk(&self, g: &mut Graph, batch: &SequenceBatch) -> Result<Var> {
        self.check_contexts(&batch.contexts)?;
        let l = &self.layers;
        let emb = l.embedding.forward(g, &self.store, &batch.contexts)?;
        let emb = g.repeat_time(emb, batch.steps)?;
        let x = g.constant(vec![batch.len(), batch.steps, N_METRICS], batch.values.clone())?;
        let cat = g.concat(x, emb)?;
        let fused = l.fusion.forward(g, &self.store, cat)?;
        let fused = g.relu(fused);
        l.lstm.forward(g, &self.store, fused, &batch.lengths)
    }

    /// Pre-activation head outputs `[B, 1]` for `mode`. Training mode
    /// updates the batch-norm running statistics.
    fn heads<R: Rng + ?Sized>(&mut self, g: &mut Graph, latent: Var, mode: Mode, rng: &mut R) -> Result<(Var, Var)> {
        let rate = self.config.dropout;
        let mut outs = [latent; 2];
        for (o, head) in outs.iter_mut().zip([self.layers.survival, self.layers.churn]) {
            let h = head.dense.forward(g, &self.store, latent)?;
            let h = g.relu(h);
            let h = match mode {
                Mode::Train => head.bn.forward(g, &mut self.store, h, Mode::Train)?,
                _ => head.bn.forward_frozen(g, &self.store, h)?,
            };
            let h = g.dropout(h, rate, mode.dropout_active(), rng)?;
            *o = head.out.forward(g, &self.store, h)?;
        }
        Ok((outs[0], outs[1]))
    }

    /// Builds the summed SMAPE + BCE loss for one batch. `survival` is in
    /// training units (targets divided by their game's [`Self::target_scale`]).
    pub fn loss_graph<R: Rng + ?Sized>(
        &mut self,
        g: &mut Graph,
        batch: &SequenceBatch,
        survival: &[f64],
        churn: &[bool],
        mode: Mode,
        rng: &mut R,
    ) -> Result<LossNodes> {
        let latent = self.trunk(g, batch)?;
        let (s, c) = self.heads(g, latent, mode, rng)?;
        let c = g.sigmoid(c);
        let labels: Vec<f64> = churn.iter().map(|&b| f64::from(u8::from(b))).collect();
        let ls = g.smape(s, survival)?;
        let lc = g.bce(c, &labels)?;
        let total = g.add(ls, lc)?;
        Ok(LossNodes {
            total,
            survival: s,
            churn: c,
        })
    }

    /// Survival estimates (target units) and churn probabilities.
    /// Training mode updates batch-norm running statistics.
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        batch: &SequenceBatch,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut g = Graph::new();
        let latent = self.trunk(&mut g, batch)?;
        let (s, c) = self.heads(&mut g, latent, mode, rng)?;
        let c = g.sigmoid(c);
        let surv = self.unscale(g.value(s), &batch.contexts);
        Ok((surv, g.value(c).to_vec()))
    }

    /// Deterministic inference-mode outputs.
    pub fn infer(&self, batch: &SequenceBatch) -> Result<(Vec<f64>, Vec<f64>)> {
        let (s, c) = self.infer_raw(batch)?;
        Ok((self.unscale(&s, &batch.contexts), c))
    }

    fn infer_raw(&self, batch: &SequenceBatch) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut g = Graph::new();
        let latent = self.trunk(&mut g, batch)?;
        let mut outs: [Vec<f64>; 2] = Default::default();
        for (o, head) in outs.iter_mut().zip([self.layers.survival, self.layers.churn]) {
            let h = head.hidden_frozen(&mut g, &self.store, latent)?;
            let y = head.out.forward(&mut g, &self.store, h)?;
            *o = g.value(y).to_vec();
        }
        let [s, c] = outs;
        Ok((s, c.into_iter().map(sigmoid).collect()))
    }

    /// Inference-mode total loss over `idx`, in training units.
    fn monitor_loss(
        &self,
        seqs: &[PaddedSequence],
        contexts: &[usize],
        survival: &[f64],
        churn: &[bool],
        idx: &[usize],
    ) -> Result<f64> {
        let mut s_all = Vec::with_capacity(idx.len());
        let mut c_all = Vec::with_capacity(idx.len());
        for chunk in idx.chunks(INFER_CHUNK) {
            let batch = SequenceBatch::gather(seqs, contexts, chunk)?;
            let (s, c) = self.infer_raw(&batch)?;
            s_all.extend(s);
            c_all.extend(c);
        }
        let ys: Vec<f64> = idx.iter().map(|&i| survival[i]).collect();
        let yc: Vec<f64> = idx.iter().map(|&i| f64::from(u8::from(churn[i]))).collect();
        Ok(loss::smape(&s_all, &ys)? + loss::bce(&c_all, &yc)?)
    }

    /// Mini-batch ADAM with the triangular cyclical schedule, early
    /// stopping on a 10% monitor split and best-epoch restore.
    pub fn fit(
        &mut self,
        seqs: &[PaddedSequence],
        contexts: &[usize],
        survival: &[f64],
        churn: &[bool],
    ) -> Result<&TrainingLog> {
        let n = seqs.len();
        for len in [contexts.len(), survival.len(), churn.len()] {
            if len != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: len,
                });
            }
        }
        self.check_contexts(contexts)?;
        if survival.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("survival targets must be finite and non-negative"));
        }
        self.target_scale = per_game_scale(survival, contexts, self.config.n_games);
        let scaled: Vec<f64> = survival
            .iter()
            .zip(contexts)
            .map(|(v, &c)| v / self.target_scale[c])
            .collect();
        let mut rng = seed::rng_for(self.seed, "bm-train", &[]);
        let (train, monitor) = monitor_split(n, Some(churn), &mut rng)?;
        let n_batches = train.len().div_ceil(self.config.batch_size).max(1);
        let schedule = CyclicalSchedule::new(
            self.config.base_lr,
            self.config.max_lr,
            (self.config.step_epochs.max(1) * n_batches) as u64,
        )?;
        let mut adam = AdamState::new(&self.store);
        let mut stopper = EarlyStopping::new(self.config.patience);
        let mut log = TrainingLog {
            train_loss: Vec::new(),
            monitor_loss: Vec::new(),
            best_epoch: 0,
        };
        let mut counter = 0u64;
        self.fitted = true;
        for epoch in 0..self.config.max_epochs {
            let mut total = 0.0;
            let mut count = 0;
            for idx in batches(&train, self.config.batch_size, &mut rng) {
                let batch = SequenceBatch::gather(seqs, contexts, &idx)?;
                let ys: Vec<f64> = idx.iter().map(|&i| scaled[i]).collect();
                let yc: Vec<bool> = idx.iter().map(|&i| churn[i]).collect();
                let mut g = Graph::new();
                let nodes = self.loss_graph(&mut g, &batch, &ys, &yc, Mode::Train, &mut rng)?;
                total += g.value(nodes.total)[0] * idx.len() as f64;
                count += idx.len();
                let grads = g.backward(nodes.total)?;
                self.store.accumulate(&g, &grads)?;
                adam.step(&mut self.store, schedule.lr(counter))?;
                counter += 1;
            }
            log.train_loss.push(total / count as f64);
            let m = self.monitor_loss(seqs, contexts, &scaled, churn, &monitor)?;
            if !m.is_finite() {
                return Err(Error::NonFinite("monitor loss".into()));
            }
            log::debug!("bm epoch {epoch}: train {:.5} monitor {m:.5}", total / count as f64);
            log.monitor_loss.push(m);
            if stopper.observe(epoch, m, &self.store) {
                break;
            }
        }
        stopper.restore(&mut self.store)?;
        log.best_epoch = stopper.best_epoch;
        self.log = Some(log);
        Ok(self.log.as_ref().expect("just set"))
    }

    /// Inference-mode point estimates for every sequence.
    pub fn predict_point(&self, seqs: &[PaddedSequence], contexts: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
        if !self.fitted {
            return Err(Error::NotFitted);
        }
        let idx: Vec<usize> = (0..seqs.len()).collect();
        let mut s_all = Vec::with_capacity(seqs.len());
        let mut c_all = Vec::with_capacity(seqs.len());
        for chunk in idx.chunks(INFER_CHUNK) {
            let (s, c) = self.infer(&SequenceBatch::gather(seqs, contexts, chunk)?)?;
            s_all.extend(s);
            c_all.extend(c);
        }
        Ok((s_all, c_all))
    }

    /// `n_samples` Monte-Carlo dropout passes per user. The trunk and each
    /// head's first layer are deterministic, so they run once; only the
    /// dropout masks and output layers are resampled. The mask for user
    /// `r` in pass `s` comes from a stream keyed by `(seed, s, r)`, so the
    /// result does not depend on the number of worker threads.
    pub fn predict_mc(
        &self,
        seqs: &[PaddedSequence],
        contexts: &[usize],
        n_samples: usize,
        seed_value: u64,
    ) -> Result<Vec<EstimateDistribution>> {
        if !self.fitted {
            return Err(Error::NotFitted);
        }
        if n_samples == 0 {
            return Err(Error::invalid("need at least one Monte-Carlo sample"));
        }
        if contexts.len() != seqs.len() {
            return Err(Error::LengthMismatch {
                expected: seqs.len(),
                actual: contexts.len(),
            });
        }
        let units = self.config.head_units;
        let mut hidden: [Vec<f64>; 2] = Default::default();
        let idx: Vec<usize> = (0..seqs.len()).collect();
        for chunk in idx.chunks(INFER_CHUNK) {
            let batch = SequenceBatch::gather(seqs, contexts, chunk)?;
            let mut g = Graph::new();
            let latent = self.trunk(&mut g, &batch)?;
            for (hv, head) in hidden.iter_mut().zip([self.layers.survival, self.layers.churn]) {
                let h = head.hidden_frozen(&mut g, &self.store, latent)?;
                hv.extend_from_slice(g.value(h));
            }
        }
        let rate = self.config.dropout;
        let keep = 1.0 / (1.0 - rate);
        let n = seqs.len();
        let heads = [
            (self.layers.survival.out, "mc-survival"),
            (self.layers.churn.out, "mc-churn"),
        ];
        let per_head: Vec<Vec<Vec<f64>>> = heads
            .iter()
            .zip(&hidden)
            .map(|(&(out, label), h)| {
                let w = self.store.get(out.weight).data();
                let b = self.store.get(out.bias).data()[0];
                (0..n_samples)
                    .into_par_iter()
                    .map(|s| {
                        (0..n)
                            .map(|r| {
                                let row = &h[r * units..(r + 1) * units];
                                let mut acc = 0.0;
                                if rate == 0.0 {
                                    for (x, wj) in row.iter().zip(w) {
                                        acc += x * wj;
                                    }
                                } else {
                                    let mut rng = seed::rng_for(seed_value, label, &[s as u64, r as u64]);
                                    for (x, wj) in row.iter().zip(w) {
                                        if rng.random::<f64>() >= rate {
                                            acc += x * keep * wj;
                                        }
                                    }
                                }
                                acc + b
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok((0..n)
            .map(|r| {
                let surv = (0..n_samples)
                    .map(|s| per_head[0][s][r] * self.target_scale[contexts[r]])
                    .collect();
                let churn = (0..n_samples).map(|s| sigmoid(per_head[1][s][r])).collect();
                EstimateDistribution::from_samples(surv, churn)
            })
            .collect())
    }

    fn unscale(&self, raw: &[f64], contexts: &[usize]) -> Vec<f64> {
        raw.iter()
            .zip(contexts)
            .map(|(v, &c)| v * self.target_scale[c])
            .collect()
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        if !self.fitted {
            return Err(Error::NotFitted);
        }
        let meta = BmMeta {
            config: self.config.clone(),
            seed: self.seed,
            target_scale: self.target_scale.clone(),
        };
        let mut ck = Checkpoint::new(CHECKPOINT_KIND, serde_json::to_value(meta)?, self.store.clone());
        ck.seed_lineage.push(("bm".into(), self.seed));
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != CHECKPOINT_KIND {
            return Err(Error::Checkpoint(format!(
                "expected a {CHECKPOINT_KIND} checkpoint, got {}",
                ck.kind
            )));
        }
        let meta: BmMeta = serde_json::from_value(ck.config.clone())?;
        let mut m = BifurcatingModel::new(meta.config, meta.seed)?;
        m.store.copy_values_from(&ck.params)?;
        if meta.target_scale.len() != m.config.n_games || meta.target_scale.iter().any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::Checkpoint("target scale does not match the game count".into()));
        }
        m.target_scale = meta.target_scale;
        m.fitted = true;
        Ok(m)
    }
}

/// RMS of the survival targets of each game; games without training
/// users take the RMS over all targets.
fn per_game_scale(survival: &[f64], contexts: &[usize], n_games: usize) -> Vec<f64> {
    let global = target_scale(survival);
    (0..n_games)
        .map(|g| {
            let ys: Vec<f64> = survival
                .iter()
                .zip(contexts)
                .filter(|(_, &c)| c == g)
                .map(|(v, _)| *v)
                .collect();
            if ys.is_empty() {
                global
            } else {
                target_scale(&ys)
            }
        })
        .collect()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
