//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation of one forward pass. Values are
//! computed eagerly; [`Graph::backward`] walks the tape in reverse and
//! returns the gradient of a scalar with respect to every node that
//! depends on a trainable leaf.

use rand::Rng;

use super::linalg::gemm;
use super::loss;
use super::params::{LayerParams, ParamId};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

struct LstmStep {
    rows: Vec<usize>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Gate activations laid out per row as `[i | f | g | o]`.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

struct LstmCache {
    batch: usize,
    steps_total: usize,
    features: usize,
    units: usize,
    steps: Vec<LstmStep>,
}

enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
    },
    AddBias {
        x: Var,
        bias: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        factor: f64,
    },
    Relu {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    Tanh {
        x: Var,
    },
    Concat {
        a: Var,
        b: Var,
    },
    RepeatTime {
        x: Var,
        steps: usize,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    BatchNormTrain {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    BatchNormEval {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Lstm {
        x: Var,
        w_input: Var,
        w_hidden: Var,
        bias: Var,
        cache: LstmCache,
    },
    Mse {
        pred: Var,
        target: Vec<f64>,
    },
    Bce {
        pred: Var,
        target: Vec<f64>,
    },
    Smape {
        pred: Var,
        target: Vec<f64>,
    },
    SumSquares {
        x: Var,
    },
    Reshape {
        x: Var,
    },
}

/// Per-node gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn wrt(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }
}

/// Outcome of a training-mode batch normalisation: the output node plus
/// the batch statistics the caller folds into its running averages.
pub struct BatchStats {
    pub output: Var,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_leaves: Vec<(ParamId, Var)>,
}

fn last_dim(shape: &[usize]) -> usize {
    *shape.last().expect("tensor shapes are never empty")
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn grad_flag(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shapes are consistent")
    }

    /// Leaf copied from `tensor`; differentiable iff `tensor.requires_grad`.
    pub fn leaf(&mut self, tensor: &Tensor) -> Var {
        self.push(
            tensor.shape().to_vec(),
            tensor.data().to_vec(),
            Op::Leaf,
            tensor.requires_grad,
        )
    }

    pub fn constant(&mut self, shape: Vec<usize>, value: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, value)?;
        Ok(self.push(t.shape().to_vec(), t.into_data(), Op::Leaf, false))
    }

    /// Leaf bound to a stored parameter; see [`LayerParams::accumulate`].
    pub fn param(&mut self, store: &LayerParams, id: ParamId) -> Var {
        let v = self.leaf(store.get(id));
        self.param_leaves.push((id, v));
        v
    }

    pub fn param_leaves(&self) -> &[(ParamId, Var)] {
        &self.param_leaves
    }

    /// `a[.., K] · b[K, N] -> [.., N]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sb.len() != 2 || last_dim(&sa) != sb[0] {
            return Err(Error::Shape(format!("matmul {sa:?} x {sb:?}")));
        }
        let (k, n) = (sb[0], sb[1]);
        let m = self.value(a).len() / k;
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a), false, self.value(b), false, &mut out, false);
        let mut shape = sa;
        *shape.last_mut().unwrap() = n;
        let g = self.grad_flag(&[a, b]);
        Ok(self.push(shape, out, Op::MatMul { a, b }, g))
    }

    /// Adds a bias vector along the last axis.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let f = last_dim(self.shape(x));
        if self.value(bias).len() != f {
            return Err(Error::Shape(format!(
                "bias of length {} for feature width {f}",
                self.value(bias).len()
            )));
        }
        let b = self.value(bias).to_vec();
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(f) {
            add_into(row, &b);
        }
        let g = self.grad_flag(&[x, bias]);
        Ok(self.push(self.shape(x).to_vec(), out, Op::AddBias { x, bias }, g))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!("add {:?} + {:?}", self.shape(a), self.shape(b))));
        }
        let out: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let g = self.grad_flag(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Add { a, b }, g))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).iter().map(|v| v * factor).collect();
        let g = self.grad_flag(&[x]);
        self.push(self.shape(x).to_vec(), out, Op::Scale { x, factor }, g)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| v.max(0.0)).collect();
        let g = self.grad_flag(&[x]);
        self.push(self.shape(x).to_vec(), out, Op::Relu { x }, g)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        let g = self.grad_flag(&[x]);
        self.push(self.shape(x).to_vec(), out, Op::Sigmoid { x }, g)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|v| v.tanh()).collect();
        let g = self.grad_flag(&[x]);
        self.push(self.shape(x).to_vec(), out, Op::Tanh { x }, g)
    }

    /// The identity activation records nothing.
    pub fn identity(&mut self, x: Var) -> Var {
        x
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(Error::Shape(format!("reshape {:?} -> {shape:?}", self.shape(x))));
        }
        let out = self.value(x).to_vec();
        let g = self.grad_flag(&[x]);
        Ok(self.push(shape, out, Op::Reshape { x }, g))
    }

    /// Concatenates along the last (feature) axis; leading axes must agree.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(Error::Shape(format!("concat {sa:?} with {sb:?}")));
        }
        let (fa, fb) = (last_dim(&sa), last_dim(&sb));
        let rows = self.value(a).len() / fa;
        let mut out = Vec::with_capacity(rows * (fa + fb));
        for r in 0..rows {
            out.extend_from_slice(&self.value(a)[r * fa..(r + 1) * fa]);
            out.extend_from_slice(&self.value(b)[r * fb..(r + 1) * fb]);
        }
        let mut shape = sa;
        *shape.last_mut().unwrap() = fa + fb;
        let g = self.grad_flag(&[a, b]);
        Ok(self.push(shape, out, Op::Concat { a, b }, g))
    }

    /// `[B, F] -> [B, T, F]` by repeating each row `steps` times.
    pub fn repeat_time(&mut self, x: Var, steps: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || steps == 0 {
            return Err(Error::Shape(format!("repeat_time on {s:?} x {steps}")));
        }
        let (b, f) = (s[0], s[1]);
        let mut out = Vec::with_capacity(b * steps * f);
        for r in 0..b {
            let row = &self.value(x)[r * f..(r + 1) * f];
            for _ in 0..steps {
                out.extend_from_slice(row);
            }
        }
        let g = self.grad_flag(&[x]);
        Ok(self.push(vec![b, steps, f], out, Op::RepeatTime { x, steps }, g))
    }

    /// Row lookup in an `[n_ids, F]` table.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let s = self.shape(table).to_vec();
        if s.len() != 2 {
            return Err(Error::Shape(format!("embedding table {s:?}")));
        }
        if ids.is_empty() {
            return Err(Error::invalid("embedding lookup with no ids"));
        }
        let (known, f) = (s[0], s[1]);
        let mut out = Vec::with_capacity(ids.len() * f);
        for &id in ids {
            if id >= known {
                return Err(Error::UnknownContext { game_id: id, known });
            }
            out.extend_from_slice(&self.value(table)[id * f..(id + 1) * f]);
        }
        let g = self.grad_flag(&[table]);
        Ok(self.push(
            vec![ids.len(), f],
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            g,
        ))
    }

    /// Inverted dropout. When `active` is false or `rate` is zero the input
    /// is returned untouched.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, active: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !active || rate == 0.0 {
            return Ok(x);
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep_scale })
            .collect();
        let out = self.value(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        let g = self.grad_flag(&[x]);
        Ok(self.push(self.shape(x).to_vec(), out, Op::Dropout { x, mask }, g))
    }

    fn check_bn(&self, x: Var, gamma: Var, beta: Var) -> Result<(usize, usize)> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(Error::Shape(format!("batch norm expects [B, C], got {s:?}")));
        }
        let (b, c) = (s[0], s[1]);
        if self.value(gamma).len() != c || self.value(beta).len() != c {
            return Err(Error::Shape("batch norm scale/shift width".into()));
        }
        Ok((b, c))
    }

    /// Normalises with the batch's own mean and (biased) variance.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<BatchStats> {
        let (b, c) = self.check_bn(x, gamma, beta)?;
        if b < 2 {
            return Err(Error::invalid("batch norm in training mode needs at least 2 rows"));
        }
        let xv = self.value(x);
        let mut mean = vec![0.0; c];
        for row in xv.chunks(c) {
            add_into(&mut mean, row);
        }
        mean.iter_mut().for_each(|m| *m /= b as f64);
        let mut var = vec![0.0; c];
        for row in xv.chunks(c) {
            for j in 0..c {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= b as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = vec![0.0; b * c];
        for (r, row) in xv.chunks(c).enumerate() {
            for j in 0..c {
                xhat[r * c + j] = (row[j] - mean[j]) * inv_std[j];
            }
        }
        let (gv, bv) = (self.value(gamma), self.value(beta));
        let out: Vec<f64> = xhat
            .iter()
            .enumerate()
            .map(|(i, h)| gv[i % c] * h + bv[i % c])
            .collect();
        let g = self.grad_flag(&[x, gamma, beta]);
        let output = self.push(
            vec![b, c],
            out,
            Op::BatchNormTrain {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            g,
        );
        Ok(BatchStats { output, mean, var })
    }

    /// Normalises with fixed (running) statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        let (_, c) = self.check_bn(x, gamma, beta)?;
        if mean.len() != c || var.len() != c {
            return Err(Error::Shape("batch norm running statistics width".into()));
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (gv, bv) = (self.value(gamma), self.value(beta));
        let out: Vec<f64> = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let j = i % c;
                gv[j] * (v - mean[j]) * inv_std[j] + bv[j]
            })
            .collect();
        let g = self.grad_flag(&[x, gamma, beta]);
        Ok(self.push(
            self.shape(x).to_vec(),
            out,
            Op::BatchNormEval {
                x,
                gamma,
                beta,
                mean: mean.to_vec(),
                inv_std,
            },
            g,
        ))
    }

    /// Masked LSTM over `x: [B, T, F]`, returning the final hidden state `[B, H]`.
    ///
    /// `lengths[b]` counts the valid leading steps of row `b`; later steps
    /// are skipped entirely, so hidden and cell state carry through them
    /// unchanged. Gate layout in the weight columns is `[i | f | g | o]`.
    pub fn lstm(&mut self, x: Var, lengths: &[usize], w_input: Var, w_hidden: Var, bias: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 3 {
            return Err(Error::Shape(format!("lstm input must be [B, T, F], got {sx:?}")));
        }
        let (batch, steps_total, features) = (sx[0], sx[1], sx[2]);
        let (swi, swh) = (self.shape(w_input).to_vec(), self.shape(w_hidden).to_vec());
        if swh.len() != 2 || swh[1] != 4 * swh[0] {
            return Err(Error::Shape(format!("lstm recurrent kernel {swh:?}")));
        }
        let units = swh[0];
        if swi != [features, 4 * units] || self.value(bias).len() != 4 * units {
            return Err(Error::Shape(format!("lstm input kernel {swi:?}")));
        }
        if lengths.len() != batch {
            return Err(Error::LengthMismatch {
                expected: batch,
                actual: lengths.len(),
            });
        }
        if let Some(bad) = lengths.iter().position(|&l| l == 0) {
            return Err(Error::invalid(format!("sequence {bad} has no valid steps")));
        }
        let xv = self.value(x);
        let wi = self.value(w_input);
        let wh = self.value(w_hidden);
        let bv = self.value(bias);
        let gw = 4 * units;

        let mut h = vec![0.0; batch * units];
        let mut c = vec![0.0; batch * units];
        let max_len = lengths.iter().copied().max().unwrap_or(0).min(steps_total);
        let mut steps = Vec::with_capacity(max_len);
        for t in 0..max_len {
            let rows: Vec<usize> = (0..batch).filter(|&r| lengths[r] > t).collect();
            let n = rows.len();
            let mut xt = Vec::with_capacity(n * features);
            let mut h_prev = Vec::with_capacity(n * units);
            let mut c_prev = Vec::with_capacity(n * units);
            for &r in &rows {
                let off = (r * steps_total + t) * features;
                xt.extend_from_slice(&xv[off..off + features]);
                h_prev.extend_from_slice(&h[r * units..(r + 1) * units]);
                c_prev.extend_from_slice(&c[r * units..(r + 1) * units]);
            }
            let mut z = vec![0.0; n * gw];
            for row in z.chunks_mut(gw) {
                row.copy_from_slice(bv);
            }
            gemm(n, features, gw, &xt, false, wi, false, &mut z, true);
            gemm(n, units, gw, &h_prev, false, wh, false, &mut z, true);
            let mut tanh_c = vec![0.0; n * units];
            for (k, &r) in rows.iter().enumerate() {
                let zr = &mut z[k * gw..(k + 1) * gw];
                for u in 0..units {
                    let i = sigmoid(zr[u]);
                    let f = sigmoid(zr[units + u]);
                    let g = zr[2 * units + u].tanh();
                    let o = sigmoid(zr[3 * units + u]);
                    zr[u] = i;
                    zr[units + u] = f;
                    zr[2 * units + u] = g;
                    zr[3 * units + u] = o;
                    let cn = f * c_prev[k * units + u] + i * g;
                    let tc = cn.tanh();
                    tanh_c[k * units + u] = tc;
                    c[r * units + u] = cn;
                    h[r * units + u] = o * tc;
                }
            }
            steps.push(LstmStep {
                rows,
                h_prev,
                c_prev,
                gates: z,
                tanh_c,
            });
        }
        let cache = LstmCache {
            batch,
            steps_total,
            features,
            units,
            steps,
        };
        let g = self.grad_flag(&[x, w_input, w_hidden, bias]);
        Ok(self.push(
            vec![batch, units],
            h,
            Op::Lstm {
                x,
                w_input,
                w_hidden,
                bias,
                cache,
            },
            g,
        ))
    }

    fn loss_node(&mut self, pred: Var, target: &[f64], kind: LossKind) -> Result<Var> {
        let p = self.value(pred);
        let value = match kind {
            LossKind::Mse => loss::mse(p, target)?,
            LossKind::Bce => loss::bce(p, target)?,
            LossKind::Smape => loss::smape(p, target)?,
        };
        let target = target.to_vec();
        let op = match kind {
            LossKind::Mse => Op::Mse { pred, target },
            LossKind::Bce => Op::Bce { pred, target },
            LossKind::Smape => Op::Smape { pred, target },
        };
        let g = self.grad_flag(&[pred]);
        Ok(self.push(vec![1], vec![value], op, g))
    }

    pub fn mse(&mut self, pred: Var, target: &[f64]) -> Result<Var> {
        self.loss_node(pred, target, LossKind::Mse)
    }

    pub fn bce(&mut self, pred: Var, target: &[f64]) -> Result<Var> {
        self.loss_node(pred, target, LossKind::Bce)
    }

    pub fn smape(&mut self, pred: Var, target: &[f64]) -> Result<Var> {
        self.loss_node(pred, target, LossKind::Smape)
    }

    /// `Σ x²` as a scalar node.
    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().map(|v| v * v).sum();
        let g = self.grad_flag(&[x]);
        self.push(vec![1], vec![s], Op::SumSquares { x }, g)
    }

    /// Reverse pass from a scalar node.
    ///
    /// Gradients are returned rather than stored, so calling this twice
    /// and accumulating both results into parameters adds them up.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![1.0]);
        for idx in (0..=root.0).rev() {
            let Some(up) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if node.needs_grad {
                self.propagate(node, &up, &mut grads);
            }
            grads[idx] = Some(up);
        }
        Ok(Gradients { grads })
    }

    fn send(&self, grads: &mut [Option<Vec<f64>>], to: Var, delta: Vec<f64>) {
        if !self.nodes[to.0].needs_grad {
            return;
        }
        match &mut grads[to.0] {
            Some(g) => add_into(g, &delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&self, node: &Node, up: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let sb = self.shape(*b);
                let (k, n) = (sb[0], sb[1]);
                let m = up.len() / n;
                if self.node(*a).needs_grad {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, up, false, self.value(*b), true, &mut da, false);
                    self.send(grads, *a, da);
                }
                if self.node(*b).needs_grad {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, self.value(*a), true, up, false, &mut db, false);
                    self.send(grads, *b, db);
                }
            }
            Op::AddBias { x, bias } => {
                let f = self.value(*bias).len();
                if self.node(*bias).needs_grad {
                    let mut db = vec![0.0; f];
                    for row in up.chunks(f) {
                        add_into(&mut db, row);
                    }
                    self.send(grads, *bias, db);
                }
                self.send(grads, *x, up.to_vec());
            }
            Op::Add { a, b } => {
                self.send(grads, *a, up.to_vec());
                self.send(grads, *b, up.to_vec());
            }
            Op::Scale { x, factor } => {
                self.send(grads, *x, up.iter().map(|g| g * factor).collect());
            }
            Op::Relu { x } => {
                let d = up
                    .iter()
                    .zip(self.value(*x))
                    .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                    .collect();
                self.send(grads, *x, d);
            }
            Op::Sigmoid { x } => {
                let d = up.iter().zip(&node.value).map(|(g, s)| g * s * (1.0 - s)).collect();
                self.send(grads, *x, d);
            }
            Op::Tanh { x } => {
                let d = up.iter().zip(&node.value).map(|(g, t)| g * (1.0 - t * t)).collect();
                self.send(grads, *x, d);
            }
            Op::Reshape { x } => self.send(grads, *x, up.to_vec()),
            Op::Concat { a, b } => {
                let fa = last_dim(self.shape(*a));
                let fb = last_dim(self.shape(*b));
                let mut da = Vec::with_capacity(self.value(*a).len());
                let mut db = Vec::with_capacity(self.value(*b).len());
                for row in up.chunks(fa + fb) {
                    da.extend_from_slice(&row[..fa]);
                    db.extend_from_slice(&row[fa..]);
                }
                self.send(grads, *a, da);
                self.send(grads, *b, db);
            }
            Op::RepeatTime { x, steps } => {
                let f = last_dim(self.shape(*x));
                let b = self.shape(*x)[0];
                let mut dx = vec![0.0; b * f];
                for r in 0..b {
                    for t in 0..*steps {
                        let off = (r * steps + t) * f;
                        add_into(&mut dx[r * f..(r + 1) * f], &up[off..off + f]);
                    }
                }
                self.send(grads, *x, dx);
            }
            Op::Embedding { table, ids } => {
                let f = last_dim(self.shape(*table));
                let mut dt = vec![0.0; self.value(*table).len()];
                for (r, &id) in ids.iter().enumerate() {
                    add_into(&mut dt[id * f..(id + 1) * f], &up[r * f..(r + 1) * f]);
                }
                self.send(grads, *table, dt);
            }
            Op::Dropout { x, mask } => {
                self.send(grads, *x, up.iter().zip(mask).map(|(g, m)| g * m).collect());
            }
            Op::BatchNormTrain {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let c = inv_std.len();
                let b = up.len() / c;
                let gv = self.value(*gamma);
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for (i, g) in up.iter().enumerate() {
                    dgamma[i % c] += g * xhat[i];
                    dbeta[i % c] += g;
                }
                if self.node(*x).needs_grad {
                    // dx = inv_std/B * (B*dxhat - Σdxhat - xhat*Σ(dxhat*xhat)),
                    // with dxhat = up*gamma, so Σdxhat = gamma*dbeta etc.
                    let bf = b as f64;
                    let dx = up
                        .iter()
                        .enumerate()
                        .map(|(i, g)| {
                            let j = i % c;
                            gv[j] * inv_std[j] / bf * (bf * g - dbeta[j] - xhat[i] * dgamma[j])
                        })
                        .collect();
                    self.send(grads, *x, dx);
                }
                self.send(grads, *gamma, dgamma);
                self.send(grads, *beta, dbeta);
            }
            Op::BatchNormEval {
                x,
                gamma,
                beta,
                mean,
                inv_std,
            } => {
                let c = inv_std.len();
                let gv = self.value(*gamma);
                let xv = self.value(*x);
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                let mut dx = vec![0.0; up.len()];
                for (i, g) in up.iter().enumerate() {
                    let j = i % c;
                    dgamma[j] += g * (xv[i] - mean[j]) * inv_std[j];
                    dbeta[j] += g;
                    dx[i] = g * gv[j] * inv_std[j];
                }
                self.send(grads, *x, dx);
                self.send(grads, *gamma, dgamma);
                self.send(grads, *beta, dbeta);
            }
            Op::Lstm {
                x,
                w_input,
                w_hidden,
                bias,
                cache,
            } => self.lstm_backward(up, *x, *w_input, *w_hidden, *bias, cache, grads),
            Op::Mse { pred, target } => {
                let g = up[0];
                let d = loss::mse_grad(self.value(*pred), target);
                self.send(grads, *pred, d.into_iter().map(|v| v * g).collect());
            }
            Op::Bce { pred, target } => {
                let g = up[0];
                let d = loss::bce_grad(self.value(*pred), target);
                self.send(grads, *pred, d.into_iter().map(|v| v * g).collect());
            }
            Op::Smape { pred, target } => {
                let g = up[0];
                let d = loss::smape_grad(self.value(*pred), target);
                self.send(grads, *pred, d.into_iter().map(|v| v * g).collect());
            }
            Op::SumSquares { x } => {
                let g = up[0];
                self.send(grads, *x, self.value(*x).iter().map(|v| 2.0 * v * g).collect());
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn lstm_backward(
        &self,
        up: &[f64],
        x: Var,
        w_input: Var,
        w_hidden: Var,
        bias: Var,
        cache: &LstmCache,
        grads: &mut [Option<Vec<f64>>],
    ) {
        let LstmCache {
            batch,
            steps_total,
            features,
            units,
            ref steps,
        } = *cache;
        let gw = 4 * units;
        let xv = self.value(x);
        let wi = self.value(w_input);
        let wh = self.value(w_hidden);
        let want_x = self.node(x).needs_grad;

        let mut dh = up.to_vec();
        let mut dc = vec![0.0; batch * units];
        let mut dwi = vec![0.0; features * gw];
        let mut dwh = vec![0.0; units * gw];
        let mut db = vec![0.0; gw];
        let mut dx = if want_x {
            vec![0.0; batch * steps_total * features]
        } else {
            Vec::new()
        };

        for (t, step) in steps.iter().enumerate().rev() {
            let n = step.rows.len();
            let mut dz = vec![0.0; n * gw];
            for (k, &r) in step.rows.iter().enumerate() {
                let gates = &step.gates[k * gw..(k + 1) * gw];
                let dzr = &mut dz[k * gw..(k + 1) * gw];
                for u in 0..units {
                    let (i, f, g, o) = (gates[u], gates[units + u], gates[2 * units + u], gates[3 * units + u]);
                    let tc = step.tanh_c[k * units + u];
                    let dh_ru = dh[r * units + u];
                    let dct = dc[r * units + u] + dh_ru * o * (1.0 - tc * tc);
                    let d_o = dh_ru * tc;
                    let d_i = dct * g;
                    let d_f = dct * step.c_prev[k * units + u];
                    let d_g = dct * i;
                    dzr[u] = d_i * i * (1.0 - i);
                    dzr[units + u] = d_f * f * (1.0 - f);
                    dzr[2 * units + u] = d_g * (1.0 - g * g);
                    dzr[3 * units + u] = d_o * o * (1.0 - o);
                    dc[r * units + u] = dct * f;
                }
            }
            for row in dz.chunks(gw) {
                add_into(&mut db, row);
            }
            let mut xt = Vec::with_capacity(n * features);
            for &r in &step.rows {
                let off = (r * steps_total + t) * features;
                xt.extend_from_slice(&xv[off..off + features]);
            }
            gemm(features, n, gw, &xt, true, &dz, false, &mut dwi, true);
            gemm(units, n, gw, &step.h_prev, true, &dz, false, &mut dwh, true);
            let mut dh_prev = vec![0.0; n * units];
            gemm(n, gw, units, &dz, false, wh, true, &mut dh_prev, false);
            for (k, &r) in step.rows.iter().enumerate() {
                dh[r * units..(r + 1) * units].copy_from_slice(&dh_prev[k * units..(k + 1) * units]);
            }
            if want_x {
                let mut dxt = vec![0.0; n * features];
                gemm(n, gw, features, &dz, false, wi, true, &mut dxt, false);
                for (k, &r) in step.rows.iter().enumerate() {
                    let off = (r * steps_total + t) * features;
                    dx[off..off + features].copy_from_slice(&dxt[k * features..(k + 1) * features]);
                }
            }
        }
        if want_x {
            self.send(grads, x, dx);
        }
        self.send(grads, w_input, dwi);
        self.send(grads, w_hidden, dwh);
        self.send(grads, bias, db);
    }
}

#[derive(Clone, Copy)]
enum LossKind {
    Mse,
    Bce,
    Smape,
}

impl LayerParams {
    /// Adds the gradients of every parameter leaf of `graph` into the
    /// parameters' gradient buffers.
    pub fn accumulate(&mut self, graph: &Graph, grads: &Gradients) -> Result<()> {
        for &(id, var) in graph.param_leaves() {
            if let Some(g) = grads.wrt(var) {
                self.get_mut(id).accumulate_grad(g)?;
            }
        }
        Ok(())
    }
}
