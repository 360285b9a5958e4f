//! Elastic net regression and L1-penalised logistic regression.

use serde::{Deserialize, Serialize};

use super::{check_targets, Matrix};
use crate::engine::linalg::gemm;
use crate::error::{Error, Result};

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn column_means(x: &Matrix) -> Vec<f64> {
    let mut m = vec![0.0; x.cols];
    for i in 0..x.rows {
        for (a, v) in m.iter_mut().zip(x.row(i)) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|a| *a /= x.rows as f64);
    m
}

/// `x · w` for every row.
fn matvec(x: &Matrix, w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.rows];
    gemm(x.rows, x.cols, 1, &x.data, false, w, false, &mut out, false);
    out
}

/// `xᵀ · r`.
fn matvec_t(x: &Matrix, r: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.cols];
    gemm(x.cols, x.rows, 1, &x.data, true, r, false, &mut out, false);
    out
}

/// Minimises `(1/2n)‖y − Xw − b‖² + α(ρ‖w‖₁ + (1−ρ)/2 ‖w‖²)` by cyclic
/// coordinate descent on the centred Gram matrix. The intercept is not
/// penalised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNet {
    pub alpha: f64,
    pub l1_ratio: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub weights: Option<Vec<f64>>,
    pub intercept: f64,
    pub n_iter: usize,
}

impl ElasticNet {
    pub fn new(alpha: f64, l1_ratio: f64) -> Result<Self> {
        if alpha.is_nan() || alpha < 0.0 || !(0.0..=1.0).contains(&l1_ratio) {
            return Err(Error::invalid(format!(
                "elastic net needs alpha >= 0 and l1_ratio in [0, 1], got {alpha}, {l1_ratio}"
            )));
        }
        Ok(ElasticNet {
            alpha,
            l1_ratio,
            tol: 1e-6,
            max_iter: 10_000,
            weights: None,
            intercept: 0.0,
            n_iter: 0,
        })
    }

    pub fn fit(&mut self, x: &Matrix, y: &[f64]) -> Result<()> {
        check_targets(x, y.len())?;
        x.check_finite("elastic net design matrix")?;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("elastic net targets".into()));
        }
        let (n, d) = (x.rows, x.cols);
        let x_mean = column_means(x);
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let mut xc = x.clone();
        for i in 0..n {
            for (v, m) in xc.data[i * d..(i + 1) * d].iter_mut().zip(&x_mean) {
                *v -= m;
            }
        }
        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let mut gram = vec![0.0; d * d];
        gemm(d, n, d, &xc.data, true, &xc.data, false, &mut gram, false);
        gram.iter_mut().for_each(|v| *v /= n as f64);
        let mut corr = matvec_t(&xc, &yc);
        corr.iter_mut().for_each(|v| *v /= n as f64);

        let l1 = self.alpha * self.l1_ratio;
        let l2 = self.alpha * (1.0 - self.l1_ratio);
        let mut w = vec![0.0; d];
        let mut q = vec![0.0; d];
        self.n_iter = 0;
        for iter in 0..self.max_iter {
            self.n_iter = iter + 1;
            let mut max_dw: f64 = 0.0;
            let mut max_w: f64 = 0.0;
            for j in 0..d {
                let gjj = gram[j * d + j];
                let denom = gjj + l2;
                let new = if denom > 0.0 {
                    soft_threshold(corr[j] - q[j] + gjj * w[j], l1) / denom
                } else {
                    0.0
                };
                let delta = new - w[j];
                if delta != 0.0 {
                    for (qk, gk) in q.iter_mut().zip(&gram[j * d..(j + 1) * d]) {
                        *qk += delta * gk;
                    }
                    w[j] = new;
                }
                max_dw = max_dw.max(delta.abs());
                max_w = max_w.max(new.abs());
            }
            if max_w == 0.0 || max_dw / max_w < self.tol {
                break;
            }
        }
        self.intercept = y_mean - x_mean.iter().zip(&w).map(|(m, w)| m * w).sum::<f64>();
        self.weights = Some(w);
        Ok(())
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        let w = self.weights.as_ref().ok_or(Error::NotFitted)?;
        if x.cols != w.len() {
            return Err(Error::LengthMismatch {
                expected: w.len(),
                actual: x.cols,
            });
        }
        Ok(matvec(x, w).into_iter().map(|v| v + self.intercept).collect())
    }
}

/// Minimises `‖w‖₁ + C·Σ log(1 + exp(−ỹ(x·w + b)))` with `ỹ ∈ {−1, +1}`
/// by accelerated proximal gradient with adaptive restart. The intercept
/// is not penalised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticL1 {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub weights: Option<Vec<f64>>,
    pub intercept: f64,
    pub n_iter: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticL1 {
    pub fn new(c: f64) -> Result<Self> {
        if c.is_nan() || c <= 0.0 {
            return Err(Error::invalid(format!("logistic C must be positive, got {c}")));
        }
        Ok(LogisticL1 {
            c,
            tol: 1e-6,
            max_iter: 5_000,
            weights: None,
            intercept: 0.0,
            n_iter: 0,
        })
    }

    /// Largest eigenvalue of `[X 1]ᵀ[X 1]` by power iteration.
    fn lipschitz_bound(x: &Matrix) -> f64 {
        let d = x.cols + 1;
        let mut v = vec![1.0 / (d as f64).sqrt(); d];
        let mut lambda = 0.0;
        for _ in 0..50 {
            let mut xv = matvec(x, &v[..x.cols]);
            xv.iter_mut().for_each(|a| *a += v[x.cols]);
            let mut u = matvec_t(x, &xv);
            u.push(xv.iter().sum());
            let norm = u.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 1.0;
            }
            lambda = norm;
            v = u.into_iter().map(|a| a / norm).collect();
        }
        // power iteration approaches from below
        lambda * 1.01
    }

    fn smooth_grad(&self, x: &Matrix, signs: &[f64], w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let z = matvec(x, w);
        let r: Vec<f64> = z
            .iter()
            .zip(signs)
            .map(|(zi, s)| -s * sigmoid(-s * (zi + b)) * self.c)
            .collect();
        let gb = r.iter().sum();
        (matvec_t(x, &r), gb)
    }

    pub fn fit(&mut self, x: &Matrix, labels: &[bool]) -> Result<()> {
        check_targets(x, labels.len())?;
        x.check_finite("logistic design matrix")?;
        let d = x.cols;
        let signs: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
        let step = 1.0 / (self.c * Self::lipschitz_bound(x) / 4.0);
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut zw = w.clone();
        let mut zb = b;
        let mut t: f64 = 1.0;
        self.n_iter = 0;
        for iter in 0..self.max_iter {
            self.n_iter = iter + 1;
            let (gw, gb) = self.smooth_grad(x, &signs, &zw, zb);
            let new_w: Vec<f64> = zw
                .iter()
                .zip(&gw)
                .map(|(z, g)| soft_threshold(z - step * g, step))
                .collect();
            let new_b = zb - step * gb;
            let mut max_d: f64 = (new_b - b).abs();
            let mut max_v: f64 = new_b.abs();
            // restart momentum when it points uphill
            let mut uphill = (zb - new_b) * (new_b - b);
            for j in 0..d {
                max_d = max_d.max((new_w[j] - w[j]).abs());
                max_v = max_v.max(new_w[j].abs());
                uphill += (zw[j] - new_w[j]) * (new_w[j] - w[j]);
            }
            if uphill > 0.0 {
                t = 1.0;
            }
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let mom = (t - 1.0) / t_next;
            for j in 0..d {
                zw[j] = new_w[j] + mom * (new_w[j] - w[j]);
            }
            zb = new_b + mom * (new_b - b);
            t = t_next;
            w = new_w;
            b = new_b;
            if max_d <= self.tol * max_v.max(1.0) {
                break;
            }
        }
        self.weights = Some(w);
        self.intercept = b;
        Ok(())
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        let w = self.weights.as_ref().ok_or(Error::NotFitted)?;
        if x.cols != w.len() {
            return Err(Error::LengthMismatch {
                expected: w.len(),
                actual: x.cols,
            });
        }
        Ok(matvec(x, w).into_iter().map(|z| sigmoid(z + self.intercept)).collect())
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<bool>> {
        Ok(self.predict_proba(x)?.into_iter().map(|p| p >= 0.5).collect())
    }

    pub fn objective(&self, x: &Matrix, labels: &[bool]) -> Result<f64> {
        let w = self.weights.as_ref().ok_or(Error::NotFitted)?;
        let z = matvec(x, w);
        let data: f64 = z
            .iter()
            .zip(labels)
            .map(|(zi, &l)| {
                let m = if l { zi + self.intercept } else { -(zi + self.intercept) };
                // log(1 + e^{-m}) computed stably
                if m > 0.0 {
                    (-m).exp().ln_1p()
                } else {
                    -m + m.exp().ln_1p()
                }
            })
            .sum();
        Ok(w.iter().map(|v| v.abs()).sum::<f64>() + self.c * data)
    }
}
