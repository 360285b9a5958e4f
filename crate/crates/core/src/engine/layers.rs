//! Parameterised layers built on top of the graph primitives.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::{BufferId, LayerParams, ParamId};
use super::tensor::Tensor;
use crate::error::Result;

/// How stochastic and batch-statistic layers behave during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Dropout on, batch norm uses (and updates) batch statistics.
    Train,
    /// Dropout off, batch norm uses running statistics.
    Inference,
    /// Dropout on, batch norm uses running statistics.
    MonteCarlo,
}

impl Mode {
    pub fn dropout_active(self) -> bool {
        matches!(self, Mode::Train | Mode::MonteCarlo)
    }
}

/// Glorot/Xavier uniform initialisation for a `[fan_in, fan_out]` kernel.
pub fn glorot_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("glorot shape")
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut LayerParams,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.register(&format!("{name}.weight"), glorot_uniform(fan_in, fan_out, rng))?;
        let bias = store.register(&format!("{name}.bias"), Tensor::zeros(&[fan_out]))?;
        Ok(Linear {
            weight,
            bias,
            fan_in,
            fan_out,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &LayerParams, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let y = g.matmul(x, w)?;
        g.add_bias(y, b)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Embedding {
    pub table: ParamId,
    pub n_ids: usize,
    pub width: usize,
}

impl Embedding {
    /// Keras-style uniform(-0.05, 0.05) initialisation.
    pub fn new<R: Rng + ?Sized>(
        store: &mut LayerParams,
        name: &str,
        n_ids: usize,
        width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let data = (0..n_ids * width).map(|_| rng.random_range(-0.05..0.05)).collect();
        let table = store.register(&format!("{name}.table"), Tensor::new(vec![n_ids, width], data)?)?;
        Ok(Embedding { table, n_ids, width })
    }

    pub fn forward(&self, g: &mut Graph, store: &LayerParams, ids: &[usize]) -> Result<Var> {
        let t = g.param(store, self.table);
        g.embedding(t, ids)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Lstm {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub features: usize,
    pub units: usize,
}

impl Lstm {
    /// Glorot kernels and a forget-gate bias of one.
    pub fn new<R: Rng + ?Sized>(
        store: &mut LayerParams,
        name: &str,
        features: usize,
        units: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w_input = store.register(&format!("{name}.w_input"), glorot_uniform(features, 4 * units, rng))?;
        let w_hidden = store.register(&format!("{name}.w_hidden"), glorot_uniform(units, 4 * units, rng))?;
        let mut b = Tensor::zeros(&[4 * units]);
        b.data_mut()[units..2 * units].iter_mut().for_each(|v| *v = 1.0);
        let bias = store.register(&format!("{name}.bias"), b)?;
        Ok(Lstm {
            w_input,
            w_hidden,
            bias,
            features,
            units,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &LayerParams, x: Var, lengths: &[usize]) -> Result<Var> {
        let wi = g.param(store, self.w_input);
        let wh = g.param(store, self.w_hidden);
        let b = g.param(store, self.bias);
        g.lstm(x, lengths, wi, wh, b)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: BufferId,
    pub running_var: BufferId,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub const DEFAULT_MOMENTUM: f64 = 0.9;
    pub const DEFAULT_EPS: f64 = 1e-3;

    pub fn new(store: &mut LayerParams, name: &str, width: usize) -> Result<Self> {
        let gamma = store.register(&format!("{name}.gamma"), Tensor::full(&[width], 1.0))?;
        let beta = store.register(&format!("{name}.beta"), Tensor::zeros(&[width]))?;
        let running_mean = store.register_buffer(&format!("{name}.running_mean"), Tensor::zeros(&[width]))?;
        let running_var = store.register_buffer(&format!("{name}.running_var"), Tensor::full(&[width], 1.0))?;
        Ok(BatchNorm {
            gamma,
            beta,
            running_mean,
            running_var,
            momentum: Self::DEFAULT_MOMENTUM,
            eps: Self::DEFAULT_EPS,
        })
    }

    /// In [`Mode::Train`] the running statistics are updated in `store` as
    /// a side effect.
    pub fn forward(&self, g: &mut Graph, store: &mut LayerParams, x: Var, mode: Mode) -> Result<Var> {
        match mode {
            Mode::Train => {
                let gamma = g.param(store, self.gamma);
                let beta = g.param(store, self.beta);
                let stats = g.batch_norm_train(x, gamma, beta, self.eps)?;
                let rows = g.shape(x)[0] as f64;
                let m = self.momentum;
                let rm = store.buffer_mut(self.running_mean).data_mut();
                for (r, b) in rm.iter_mut().zip(&stats.mean) {
                    *r = m * *r + (1.0 - m) * b;
                }
                let rv = store.buffer_mut(self.running_var).data_mut();
                let unbias = rows / (rows - 1.0);
                for (r, b) in rv.iter_mut().zip(&stats.var) {
                    *r = m * *r + (1.0 - m) * b * unbias;
                }
                Ok(stats.output)
            }
            Mode::Inference | Mode::MonteCarlo => self.forward_frozen(g, store, x),
        }
    }

    /// Normalises with the running statistics; never touches the store.
    pub fn forward_frozen(&self, g: &mut Graph, store: &LayerParams, x: Var) -> Result<Var> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        let mean = store.buffer(self.running_mean).data();
        let var = store.buffer(self.running_var).data();
        g.batch_norm_eval(x, gamma, beta, mean, var, self.eps)
    }
}
