//! Estimators: mean baseline, elastic net, L1 logistic regression, MLPs and
//! the Bifurcating Model.

pub mod bm;
pub mod linear;
pub mod mean;
pub mod mlp;
pub mod training;

pub use bm::{BifurcatingModel, BmConfig, EstimateDistribution, SequenceBatch};
pub use linear::{ElasticNet, LogisticL1};
pub use mean::MeanModel;
pub use mlp::{Mlp, MlpConfig, MlpTask};
pub use training::EarlyStopping;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::LengthMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }
}

pub(crate) fn check_targets(x: &Matrix, n: usize) -> Result<()> {
    if x.rows != n {
        return Err(Error::LengthMismatch {
            expected: x.rows,
            actual: n,
        });
    }
    if x.rows == 0 {
        return Err(Error::invalid("cannot fit on zero examples"));
    }
    Ok(())
}

/// Root mean square of the targets, used to bring regression targets to
/// unit scale; 1 when all targets are zero.
pub fn target_scale(y: &[f64]) -> f64 {
    let rms = (y.iter().map(|v| v * v).sum::<f64>() / y.len().max(1) as f64).sqrt();
    if rms > 0.0 && rms.is_finite() {
        rms
    } else {
        1.0
    }
}
