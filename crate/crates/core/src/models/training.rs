//! Shared pieces of the neural training loops.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::LayerParams;
use crate::error::{Error, Result};

/// Fraction of the training data held out to monitor convergence.
pub const MONITOR_FRACTION: f64 = 0.1;
pub const PATIENCE: usize = 3;
pub const BATCH_SIZE: usize = 256;

/// Tracks the best monitored loss and the parameters that produced it.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best_loss: f64,
    pub best_epoch: usize,
    pub stale_epochs: usize,
    best_params: Option<LayerParams>,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            stale_epochs: 0,
            best_params: None,
        }
    }

    /// Records one epoch; returns true when training should stop.
    /// Only a strict improvement resets the patience counter.
    pub fn observe(&mut self, epoch: usize, loss: f64, params: &LayerParams) -> bool {
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_epoch = epoch;
            self.stale_epochs = 0;
            self.best_params = Some(params.clone());
        } else {
            self.stale_epochs += 1;
        }
        self.stale_epochs >= self.patience
    }

    /// Copies the best-epoch values back into `params`.
    pub fn restore(&self, params: &mut LayerParams) -> Result<()> {
        match &self.best_params {
            Some(best) => params.copy_values_from(best),
            None => Err(Error::invalid("no epoch was observed")),
        }
    }
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub train_loss: Vec<f64>,
    pub monitor_loss: Vec<f64>,
    pub best_epoch: usize,
}

/// Splits `0..n` into `(train, monitor)` with `MONITOR_FRACTION` in the
/// monitor part. With `labels` the split is stratified by label.
pub fn monitor_split<R: Rng + ?Sized>(
    n: usize,
    labels: Option<&[bool]>,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 20 {
        return Err(Error::invalid(format!(
            "need at least 20 examples for the convergence monitor split, got {n}"
        )));
    }
    let groups: Vec<Vec<usize>> = match labels {
        Some(l) => {
            let pos = (0..n).filter(|&i| l[i]).collect();
            let neg = (0..n).filter(|&i| !l[i]).collect();
            vec![neg, pos]
        }
        None => vec![(0..n).collect()],
    };
    let mut train = Vec::with_capacity(n);
    let mut monitor = Vec::new();
    for mut g in groups {
        g.shuffle(rng);
        let k = ((g.len() as f64) * MONITOR_FRACTION).round() as usize;
        monitor.extend_from_slice(&g[..k]);
        train.extend_from_slice(&g[k..]);
    }
    if monitor.is_empty() {
        monitor.push(train.pop().expect("n >= 20"));
    }
    train.sort_unstable();
    monitor.sort_unstable();
    Ok((train, monitor))
}

/// Shuffled mini-batches; a trailing batch of a single row is merged into
/// the previous one so batch statistics stay defined.
pub fn batches<R: Rng + ?Sized>(idx: &[usize], batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order = idx.to_vec();
    order.shuffle(rng);
    let mut out: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        let last = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").extend(last);
    }
    out
}
