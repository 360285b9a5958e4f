//! Mean baseline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Predicts the training mean survival for everyone and draws churn
/// decisions from a Bernoulli at the training churn rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanModel {
    pub mean_survival: Option<f64>,
    pub churn_rate: Option<f64>,
    pub seed: u64,
}

impl MeanModel {
    pub fn new(seed: u64) -> Self {
        MeanModel {
            mean_survival: None,
            churn_rate: None,
            seed,
        }
    }

    pub fn fit(&mut self, survival: &[f64], churn: &[bool]) -> Result<()> {
        if survival.is_empty() || churn.is_empty() {
            return Err(Error::invalid("mean model needs at least one example"));
        }
        self.mean_survival = Some(survival.iter().sum::<f64>() / survival.len() as f64);
        self.churn_rate = Some(churn.iter().filter(|&&c| c).count() as f64 / churn.len() as f64);
        Ok(())
    }

    pub fn predict_survival(&self, n: usize) -> Result<Vec<f64>> {
        let m = self.mean_survival.ok_or(Error::NotFitted)?;
        Ok(vec![m; n])
    }

    /// `n` seeded draws; `stream` separates independent prediction calls.
    pub fn predict_churn(&self, n: usize, stream: u64) -> Result<Vec<bool>> {
        let p = self.churn_rate.ok_or(Error::NotFitted)?;
        let mut rng = seed::rng_for(self.seed, "mean-model", &[stream]);
        Ok((0..n).map(|_| rng.random::<f64>() < p).collect())
    }
}
