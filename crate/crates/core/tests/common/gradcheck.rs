//! Central finite differences against reverse-mode gradients.

use std::collections::BTreeMap;

use bifurcate::engine::{Graph, LayerParams, Tensor, Var};
use bifurcate::Result;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor of the relative error, so that gradients that are
/// zero up to round-off compare on an absolute scale.
pub const FLOOR: f64 = 1e-6;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Report {
    pub max_rel: f64,
    pub checked: usize,
    /// `(analytic, numeric)` of the entry with the largest error.
    pub worst: (f64, f64),
}

impl Report {
    fn observe(&mut self, analytic: f64, numeric: f64) {
        let e = rel_error(analytic, numeric);
        if e > self.max_rel || self.checked == 0 {
            self.max_rel = e;
            self.worst = (analytic, numeric);
        }
        self.checked += 1;
    }

    pub fn merge(&mut self, other: Report) {
        if other.max_rel > self.max_rel {
            self.max_rel = other.max_rel;
            self.worst = other.worst;
        }
        self.checked += other.checked;
    }

    pub fn passes(&self) -> bool {
        self.max_rel < TOLERANCE && self.checked > 0
    }
}

fn scalar(g: &Graph, v: Var) -> f64 {
    let value = g.value(v);
    assert_eq!(value.len(), 1, "loss must be a scalar");
    value[0]
}

/// Checks the gradient of `build` with respect to every element of the
/// leaf tensors `inputs`. `build` must be deterministic.
pub fn check_inputs<F>(inputs: &[Tensor], mut build: F) -> Result<Report>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut eval = |tensors: &[Tensor]| -> Result<(Graph, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let leaves: Vec<Var> = tensors.iter().map(|t| g.leaf(&t.clone().trainable())).collect();
        let loss = build(&mut g, &leaves)?;
        Ok((g, leaves, loss))
    };
    let (g, leaves, loss) = eval(inputs)?;
    let grads = g.backward(loss)?;
    let mut report = Report::default();
    for (i, t) in inputs.iter().enumerate() {
        let analytic = grads
            .wrt(leaves[i])
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; t.len()]);
        for (k, &a) in analytic.iter().enumerate() {
            let mut shifted = inputs.to_vec();
            shifted[i].data_mut()[k] += STEP;
            let (gp, _, lp) = eval(&shifted)?;
            shifted[i].data_mut()[k] -= 2.0 * STEP;
            let (gm, _, lm) = eval(&shifted)?;
            let numeric = (scalar(&gp, lp) - scalar(&gm, lm)) / (2.0 * STEP);
            report.observe(a, numeric);
        }
    }
    Ok(report)
}

/// Checks the gradient of `build` with respect to every parameter in the
/// store. Gradients of a parameter bound to several graph leaves are
/// summed. `build` must be deterministic in the parameter values.
pub fn check_params<S, F>(state: &mut S, params: fn(&mut S) -> &mut LayerParams, mut build: F) -> Result<Report>
where
    F: FnMut(&mut S, &mut Graph) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = build(state, &mut g)?;
    let grads = g.backward(loss)?;
    let mut analytic: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let store = params(state);
    let ids: Vec<_> = store.ids().collect();
    for &(id, var) in g.param_leaves() {
        let pos = ids.iter().position(|&p| p == id).expect("leaf of a stored parameter");
        let slot = analytic.entry(pos).or_insert_with(|| vec![0.0; store.get(id).len()]);
        if let Some(d) = grads.wrt(var) {
            slot.iter_mut().zip(d).for_each(|(s, v)| *s += v);
        }
    }
    let mut report = Report::default();
    for (pos, &id) in ids.iter().enumerate() {
        let n = params(state).get(id).len();
        for k in 0..n {
            let original = params(state).get(id).data()[k];
            params(state).get_mut(id).data_mut()[k] = original + STEP;
            let mut gp = Graph::new();
            let lp = build(state, &mut gp)?;
            params(state).get_mut(id).data_mut()[k] = original - STEP;
            let mut gm = Graph::new();
            let lm = build(state, &mut gm)?;
            params(state).get_mut(id).data_mut()[k] = original;
            let numeric = (scalar(&gp, lp) - scalar(&gm, lm)) / (2.0 * STEP);
            let a = analytic.get(&pos).map_or(0.0, |v| v[k]);
            report.observe(a, numeric);
        }
    }
    Ok(report)
}

pub mod suites {
    //! Randomised gradient checks for every layer type and for a shrunken
    //! Bifurcating Model.

    use bifurcate::engine::{BatchNorm, Embedding, Graph, LayerParams, Linear, Lstm, Mode, Tensor, Var};
    use bifurcate::models::{BifurcatingModel, BmConfig, SequenceBatch};
    use bifurcate::seed;
    use bifurcate::Result;
    use rand::Rng;

    use super::{check_inputs, check_params, Report};

    fn uniform<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(lo..hi)).collect()
    }

    fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor {
        Tensor::new(shape.to_vec(), data).expect("consistent shape")
    }

    fn store(p: &mut (LayerParams, Vec<f64>)) -> &mut LayerParams {
        &mut p.0
    }

    fn mse_to(g: &mut Graph, v: Var, target: &[f64]) -> Result<Var> {
        let n = g.value(v).len();
        let flat = g.reshape(v, vec![n])?;
        g.mse(flat, target)
    }

    fn combined(a: Report, b: Report) -> Report {
        let mut r = a;
        r.merge(b);
        r
    }

    /// One randomised instance of every layer-level check for `seed`.
    pub fn layers(seed_value: u64) -> Result<Vec<(&'static str, Report)>> {
        let mut rng = seed::rng_for(seed_value, "gradcheck-layers", &[]);
        let mut out = Vec::new();
        let b = rng.random_range(2..5);
        let f = rng.random_range(2..5);
        let h = rng.random_range(2..5);
        let t = rng.random_range(2..5);

        // dense
        let mut ps = LayerParams::new();
        let lin = Linear::new(&mut ps, "dense", f, h, &mut rng)?;
        let v = uniform(&mut rng, h, -0.5, 0.5);
        ps.get_mut(lin.bias).data_mut().copy_from_slice(&v);
        let x = tensor(&[b, f], uniform(&mut rng, b * f, -1.0, 1.0));
        let target = uniform(&mut rng, b * h, -1.0, 1.0);
        let mut state = (ps, target.clone());
        let xr = x.clone();
        let wrt_params = check_params(&mut state, store, |s, g| {
            let xv = g.leaf(&xr);
            let y = lin.forward(g, &s.0, xv)?;
            mse_to(g, y, &s.1)
        })?;
        let frozen = state.0.clone();
        let wrt_input = check_inputs(&[x], |g, v| {
            let y = lin.forward(g, &frozen, v[0])?;
            mse_to(g, y, &target)
        })?;
        out.push(("dense", combined(wrt_params, wrt_input)));

        // embedding
        let n_ids = rng.random_range(2..5);
        let mut ps = LayerParams::new();
        let emb = Embedding::new(&mut ps, "embedding", n_ids, h, &mut rng)?;
        let ids: Vec<usize> = (0..b + 2).map(|_| rng.random_range(0..n_ids)).collect();
        let target = uniform(&mut rng, ids.len() * h, -0.2, 0.2);
        let mut state = (ps, target);
        let r = check_params(&mut state, store, |s, g| {
            let y = emb.forward(g, &s.0, &ids)?;
            mse_to(g, y, &s.1)
        })?;
        out.push(("embedding", r));

        // masked lstm over a padded batch
        let mut ps = LayerParams::new();
        let lstm = Lstm::new(&mut ps, "lstm", f, h, &mut rng)?;
        let lengths: Vec<usize> = (0..b).map(|_| rng.random_range(1..=t)).collect();
        let x = tensor(&[b, t, f], uniform(&mut rng, b * t * f, -1.0, 1.0));
        let target = uniform(&mut rng, b * h, -0.5, 0.5);
        let mut state = (ps, target.clone());
        let xr = x.clone();
        let lens = lengths.clone();
        let wrt_params = check_params(&mut state, store, |s, g| {
            let xv = g.leaf(&xr);
            let y = lstm.forward(g, &s.0, xv, &lens)?;
            mse_to(g, y, &s.1)
        })?;
        let frozen = state.0.clone();
        let wrt_input = check_inputs(&[x], |g, v| {
            let y = lstm.forward(g, &frozen, v[0], &lengths)?;
            mse_to(g, y, &target)
        })?;
        out.push(("lstm", combined(wrt_params, wrt_input)));

        // batch norm, training and inference statistics
        let rows = b + 2;
        let mut ps = LayerParams::new();
        let bn = BatchNorm::new(&mut ps, "bn", h)?;
        let gamma = uniform(&mut rng, h, 0.5, 1.5);
        let beta = uniform(&mut rng, h, -0.5, 0.5);
        ps.get_mut(bn.gamma).data_mut().copy_from_slice(&gamma);
        ps.get_mut(bn.beta).data_mut().copy_from_slice(&beta);
        let rm = uniform(&mut rng, h, -0.5, 0.5);
        let rv = uniform(&mut rng, h, 0.5, 2.0);
        ps.buffer_mut(bn.running_mean).data_mut().copy_from_slice(&rm);
        ps.buffer_mut(bn.running_var).data_mut().copy_from_slice(&rv);
        let x = tensor(&[rows, h], uniform(&mut rng, rows * h, -1.0, 1.0));
        let target = uniform(&mut rng, rows * h, -1.0, 1.0);
        for (name, mode) in [
            ("batch_norm_train", Mode::Train),
            ("batch_norm_inference", Mode::Inference),
        ] {
            let mut state = (ps.clone(), target.clone());
            let xr = x.clone();
            let wrt_params = check_params(&mut state, store, |s, g| {
                let xv = g.leaf(&xr);
                let y = bn.forward(g, &mut s.0, xv, mode)?;
                mse_to(g, y, &s.1)
            })?;
            let mut frozen = ps.clone();
            let wrt_input = check_inputs(std::slice::from_ref(&x), |g, v| {
                let y = bn.forward(g, &mut frozen, v[0], mode)?;
                mse_to(g, y, &target)
            })?;
            out.push((name, combined(wrt_params, wrt_input)));
        }

        // dropout with a fixed mask
        let x = tensor(&[b, h], uniform(&mut rng, b * h, -1.0, 1.0));
        let target = uniform(&mut rng, b * h, -1.0, 1.0);
        let mask_seed = rng.random::<u64>();
        let r = check_inputs(&[x], |g, v| {
            let y = g.dropout(v[0], 0.3, true, &mut seed::rng(mask_seed))?;
            mse_to(g, y, &target)
        })?;
        out.push(("dropout", r));

        // activations; relu inputs stay clear of the kink
        let n = b * h;
        let away: Vec<f64> = uniform(&mut rng, n, 0.05, 1.0)
            .into_iter()
            .map(|v| if rng.random::<bool>() { v } else { -v })
            .collect();
        let target = uniform(&mut rng, n, -1.0, 1.0);
        type Act = fn(&mut Graph, Var) -> Var;
        let acts: [(&str, Act); 3] = [
            ("relu", Graph::relu),
            ("sigmoid", Graph::sigmoid),
            ("tanh", Graph::tanh),
        ];
        for (name, act) in acts {
            let r = check_inputs(&[tensor(&[n], away.clone())], |g, v| {
                let y = act(g, v[0]);
                g.mse(y, &target)
            })?;
            out.push((name, r));
        }

        // context fusion: repeat over time, concatenate, per-step dense
        let mut ps = LayerParams::new();
        let fusion = Linear::new(&mut ps, "fusion", f + h, h, &mut rng)?;
        let x = tensor(&[b, t, f], uniform(&mut rng, b * t * f, -1.0, 1.0));
        let ctx = tensor(&[b, h], uniform(&mut rng, b * h, -1.0, 1.0));
        let target = uniform(&mut rng, b * t * h, -1.0, 1.0);
        let r = check_inputs(&[x, ctx], |g, v| {
            let rep = g.repeat_time(v[1], t)?;
            let cat = g.concat(v[0], rep)?;
            let y = fusion.forward(g, &ps, cat)?;
            let y = g.scale(y, 0.5);
            let y = g.add(y, y)?;
            mse_to(g, y, &target)
        })?;
        out.push(("fusion", r));

        // losses
        let pred = uniform(&mut rng, n, 0.05, 0.95);
        let labels: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
        let r = check_inputs(&[tensor(&[n], pred)], |g, v| g.bce(v[0], &labels))?;
        out.push(("bce", r));
        let pred = uniform(&mut rng, n, 0.5, 3.0);
        let truth: Vec<f64> = pred
            .iter()
            .map(|p| p + if rng.random::<bool>() { 0.3 } else { -0.3 } * rng.random_range(0.1..1.0))
            .collect();
        let r = check_inputs(&[tensor(&[n], pred.clone())], |g, v| g.smape(v[0], &truth))?;
        out.push(("smape", r));
        let r = check_inputs(&[tensor(&[n], pred)], |g, v| g.mse(v[0], &truth))?;
        out.push(("mse", r));
        let r = check_inputs(&[tensor(&[n], away)], |g, v| Ok(g.sum_squares(v[0])))?;
        out.push(("sum_squares", r));
        Ok(out)
    }

    /// Shrunken model: 2-wide embedding, 3-unit LSTM, 4-unit heads.
    pub fn shrunken_config(n_games: usize) -> BmConfig {
        BmConfig {
            embedding_dim: 2,
            fusion_dim: 3,
            lstm_units: 3,
            head_units: 4,
            ..BmConfig::new(n_games)
        }
    }

    fn model_store(m: &mut BifurcatingModel) -> &mut LayerParams {
        m.params_mut()
    }

    /// Summed SMAPE + BCE training loss of a shrunken model against every
    /// parameter at a randomly perturbed point, with dropout and batch
    /// statistics active.
    pub fn shrunken_bm(seed_value: u64) -> Result<Report> {
        let mut rng = seed::rng_for(seed_value, "gradcheck-bm", &[]);
        let n_games = 3;
        let mut model = BifurcatingModel::new(shrunken_config(n_games), seed_value)?;
        // zero-initialised biases can place pre-activations exactly on a ReLU kink
        let ids: Vec<_> = model.params().ids().collect();
        for id in ids {
            for v in model.params_mut().get_mut(id).data_mut() {
                *v += rng.random_range(-0.1..0.1);
            }
        }
        let rows = 6;
        let steps = 4;
        let lengths: Vec<usize> = (0..rows).map(|_| rng.random_range(1..=steps)).collect();
        let mut values = vec![0.0; rows * steps * 5];
        for (r, &len) in lengths.iter().enumerate() {
            for v in &mut values[r * steps * 5..(r * steps + len) * 5] {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        let contexts: Vec<usize> = (0..rows).map(|_| rng.random_range(0..n_games)).collect();
        let batch = SequenceBatch::new(values, steps, lengths, contexts)?;
        let survival = uniform(&mut rng, rows, 0.5, 2.0);
        let churn: Vec<bool> = (0..rows).map(|i| i % 2 == 0).collect();
        let mask_seed = rng.random::<u64>();
        check_params(&mut model, model_store, |m, g| {
            let nodes = m.loss_graph(g, &batch, &survival, &churn, Mode::Train, &mut seed::rng(mask_seed))?;
            Ok(nodes.total)
        })
    }
}
