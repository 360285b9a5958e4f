//! Multi-layer perceptron regressor and classifier.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::training::{batches, monitor_split, EarlyStopping, TrainingLog, BATCH_SIZE, PATIENCE};
use super::{check_targets, target_scale, Matrix};
use crate::engine::{AdamState, Checkpoint, Graph, LayerParams, Linear, Var};
use crate::error::{Error, Result};
use crate::seed;

const PREDICT_CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MlpTask {
    /// Identity output, squared error.
    Regressor,
    /// Sigmoid output, binary cross entropy.
    Classifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    /// Weight penalty `0.5·l2·Σw² / batch_rows` added to each batch loss.
    pub l2: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![200, 100, 50],
            l2: 0.01,
            learning_rate: 1e-3,
            batch_size: BATCH_SIZE,
            max_epochs: 200,
            patience: PATIENCE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    pub task: MlpTask,
    pub config: MlpConfig,
    pub input_dim: usize,
    pub seed: u64,
    /// Regression targets are divided by this before training.
    pub target_scale: f64,
    pub log: Option<TrainingLog>,
    store: LayerParams,
    layers: Vec<Linear>,
    fitted: bool,
}

#[derive(Serialize, Deserialize)]
struct MlpMeta {
    task: MlpTask,
    config: MlpConfig,
    input_dim: usize,
    seed: u64,
    target_scale: f64,
}

impl Mlp {
    pub fn new(task: MlpTask, input_dim: usize, config: MlpConfig, seed_value: u64) -> Result<Self> {
        if input_dim == 0 || config.hidden.contains(&0) {
            return Err(Error::invalid("MLP layer widths must be positive"));
        }
        let mut rng = seed::rng_for(seed_value, "mlp-init", &[]);
        let mut store = LayerParams::new();
        let mut layers = Vec::new();
        let mut fan_in = input_dim;
        for (i, &h) in config.hidden.iter().chain(std::iter::once(&1)).enumerate() {
            layers.push(Linear::new(&mut store, &format!("dense{i}"), fan_in, h, &mut rng)?);
            fan_in = h;
        }
        Ok(Mlp {
            task,
            config,
            input_dim,
            seed: seed_value,
            target_scale: 1.0,
            log: None,
            store,
            layers,
            fitted: false,
        })
    }

    pub fn params(&self) -> &LayerParams {
        &self.store
    }

    fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, &self.store, h)?;
            if i < last {
                h = g.relu(h);
            }
        }
        Ok(match self.task {
            MlpTask::Regressor => h,
            MlpTask::Classifier => g.sigmoid(h),
        })
    }

    fn data_loss(&self, g: &mut Graph, out: Var, target: &[f64]) -> Result<Var> {
        match self.task {
            MlpTask::Regressor => g.mse(out, target),
            MlpTask::Classifier => g.bce(out, target),
        }
    }

    fn rows_var(g: &mut Graph, x: &Matrix, idx: &[usize]) -> Result<Var> {
        let sub = x.select_rows(idx);
        g.constant(vec![sub.rows, sub.cols], sub.data)
    }

    fn monitor_loss(&self, x: &Matrix, y: &[f64], idx: &[usize]) -> Result<f64> {
        let out = self.raw_outputs(&x.select_rows(idx))?;
        let target: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        match self.task {
            MlpTask::Regressor => crate::engine::loss::mse(&out, &target),
            MlpTask::Classifier => crate::engine::loss::bce(&out, &target),
        }
    }

    /// Trains with early stopping on a 10% monitor split. Classifier
    /// targets are 0/1 and the split is stratified by them.
    pub fn fit(&mut self, x: &Matrix, y: &[f64]) -> Result<&TrainingLog> {
        check_targets(x, y.len())?;
        x.check_finite("MLP inputs")?;
        if x.cols != self.input_dim {
            return Err(Error::LengthMismatch {
                expected: self.input_dim,
                actual: x.cols,
            });
        }
        let y: Vec<f64> = match self.task {
            MlpTask::Regressor => {
                self.target_scale = target_scale(y);
                y.iter().map(|v| v / self.target_scale).collect()
            }
            MlpTask::Classifier => {
                if y.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::invalid("classifier targets must be 0 or 1"));
                }
                y.to_vec()
            }
        };
        let mut rng = seed::rng_for(self.seed, "mlp-train", &[]);
        let labels: Option<Vec<bool>> = match self.task {
            MlpTask::Classifier => Some(y.iter().map(|&v| v == 1.0).collect()),
            MlpTask::Regressor => None,
        };
        let (train, monitor) = monitor_split(x.rows, labels.as_deref(), &mut rng)?;
        let mut adam = AdamState::new(&self.store);
        let mut stopper = EarlyStopping::new(self.config.patience);
        let mut log = TrainingLog {
            train_loss: Vec::new(),
            monitor_loss: Vec::new(),
            best_epoch: 0,
        };
        self.fitted = true;
        for epoch in 0..self.config.max_epochs {
            let mut total = 0.0;
            let mut count = 0;
            for batch in batches(&train, self.config.batch_size, &mut rng) {
                let mut g = Graph::new();
                let xb = Self::rows_var(&mut g, x, &batch)?;
                let target: Vec<f64> = batch.iter().map(|&i| y[i]).collect();
                let out = self.forward(&mut g, xb)?;
                let data = self.data_loss(&mut g, out, &target)?;
                total += g.value(data)[0] * batch.len() as f64;
                count += batch.len();
                let mut loss = data;
                if self.config.l2 > 0.0 {
                    let factor = 0.5 * self.config.l2 / batch.len() as f64;
                    let weights: Vec<Var> = g
                        .param_leaves()
                        .iter()
                        .filter(|(id, _)| self.layers.iter().any(|l| l.weight == *id))
                        .map(|&(_, v)| v)
                        .collect();
                    for w in weights {
                        let sq = g.sum_squares(w);
                        let pen = g.scale(sq, factor);
                        loss = g.add(loss, pen)?;
                    }
                }
                let grads = g.backward(loss)?;
                self.store.accumulate(&g, &grads)?;
                adam.step(&mut self.store, self.config.learning_rate)?;
            }
            log.train_loss.push(total / count as f64);
            let m = self.monitor_loss(x, &y, &monitor)?;
            if !m.is_finite() {
                return Err(Error::NonFinite("MLP monitor loss".into()));
            }
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

    /// Network outputs in training units.
    fn raw_outputs(&self, x: &Matrix) -> Result<Vec<f64>> {
        if !self.fitted {
            return Err(Error::NotFitted);
        }
        if x.cols != self.input_dim {
            return Err(Error::LengthMismatch {
                expected: self.input_dim,
                actual: x.cols,
            });
        }
        let mut out = Vec::with_capacity(x.rows);
        let idx: Vec<usize> = (0..x.rows).collect();
        for chunk in idx.chunks(PREDICT_CHUNK) {
            let mut g = Graph::new();
            let xb = Self::rows_var(&mut g, x, chunk)?;
            let o = self.forward(&mut g, xb)?;
            out.extend_from_slice(g.value(o));
        }
        Ok(out)
    }

    /// Regressor: estimates in target units. Classifier: probabilities.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        let out = self.raw_outputs(x)?;
        Ok(match self.task {
            MlpTask::Regressor => out.into_iter().map(|v| v * self.target_scale).collect(),
            MlpTask::Classifier => out,
        })
    }

    pub fn predict_labels(&self, x: &Matrix) -> Result<Vec<bool>> {
        Ok(self.predict(x)?.into_iter().map(|p| p >= 0.5).collect())
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        if !self.fitted {
            return Err(Error::NotFitted);
        }
        let meta = MlpMeta {
            task: self.task,
            config: self.config.clone(),
            input_dim: self.input_dim,
            seed: self.seed,
            target_scale: self.target_scale,
        };
        let mut ck = Checkpoint::new("mlp", serde_json::to_value(meta)?, self.store.clone());
        ck.seed_lineage.push(("mlp".into(), self.seed));
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != "mlp" {
            return Err(Error::Checkpoint(format!(
                "expected an mlp checkpoint, got {}",
                ck.kind
            )));
        }
        let meta: MlpMeta = serde_json::from_value(ck.config.clone())?;
        let mut m = Mlp::new(meta.task, meta.input_dim, meta.config, meta.seed)?;
        m.store.copy_values_from(&ck.params)?;
        m.target_scale = meta.target_scale;
        m.fitted = true;
        Ok(m)
    }
}

/// Draws a standard-normal design matrix; used by tests and benchmarks.
pub fn random_design<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    use rand_distr::{Distribution, StandardNormal};
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Matrix { rows, cols, data }
}
