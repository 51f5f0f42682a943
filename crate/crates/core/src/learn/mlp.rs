//! Least-squares training of ReLU networks with Adam.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::mpc::{index_rng, Dataset};
use crate::numerics::Vector;
use crate::relunet::ReluNetwork;

fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_batch() -> usize {
    64
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Learning rate reached at the last epoch by geometric decay; constant
    /// when absent.
    #[serde(default)]
    pub final_learning_rate: Option<f64>,
    /// Train on standardized inputs and outputs and fold the scaling into
    /// the first and last layer afterwards.
    #[serde(default = "default_true")]
    pub standardize: bool,
}

impl TrainConfig {
    pub fn new(m: usize, l: usize, epochs: usize, seed: u64) -> Self {
        Self {
            m,
            l,
            learning_rate: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            batch_size: default_batch(),
            epochs,
            seed,
            final_learning_rate: None,
            standardize: true,
        }
    }

    pub fn validate(&self, n_x: usize) -> Result<()> {
        let rates = [self.learning_rate, self.beta1, self.beta2, self.eps, self.final_learning_rate.unwrap_or(1.0)];
        if rates.iter().any(|r| !(*r > 0.0) || !r.is_finite()) || self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::PreconditionViolated("learning rates and Adam constants must be positive (betas below 1)".into()));
        }
        if self.batch_size == 0 || self.l == 0 {
            return Err(Error::PreconditionViolated("batch size and depth must be positive".into()));
        }
        if self.m < n_x {
            return Err(Error::PreconditionViolated(format!("width {} is smaller than the input dimension {n_x}", self.m)));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamParams {
        AdamParams { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.final_learning_rate {
            Some(end) if self.epochs > 1 => self.learning_rate * (end / self.learning_rate).powf(epoch as f64 / (self.epochs - 1) as f64),
            _ => self.learning_rate,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vector,
    pub v: Vector,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One bias-corrected Adam step.
pub fn adam_update(params: &[f64], grads: &[f64], state: &AdamState, cfg: &AdamParams) -> (Vector, AdamState) {
    let t = state.t + 1;
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    let mut m = state.m.clone();
    let mut v = state.v.clone();
    let mut out = params.to_vec();
    for i in 0..params.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grads[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        out[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.eps);
    }
    (out, AdamState { m, v, t })
}

/// Dense view of a network used by the training loop.
struct Shapes {
    /// `(rows, cols, offset of W, offset of b)` per layer.
    layers: Vec<(usize, usize, usize, usize)>,
    n_params: usize,
}

impl Shapes {
    fn of(net: &ReluNetwork) -> Self {
        let mut at = 0;
        let layers = net
            .layers()
            .iter()
            .map(|l| {
                let (r, c) = (l.w.rows(), l.w.cols());
                let s = (r, c, at, at + r * c);
                at += r * c + r;
                s
            })
            .collect();
        Self { layers, n_params: at }
    }
}

/// Forward pass storing every layer's output (post-activation for hidden
/// layers), starting with the input.
fn forward(sh: &Shapes, p: &[f64], x: &[f64], acts: &mut Vec<Vector>) {
    acts.clear();
    acts.push(x.to_vec());
    let last = sh.layers.len() - 1;
    for (li, &(r, c, wo, bo)) in sh.layers.iter().enumerate() {
        let input = &acts[li];
        let mut out = vec![0.0; r];
        for i in 0..r {
            let row = &p[wo + i * c..wo + (i + 1) * c];
            let mut s = p[bo + i];
            for j in 0..c {
                s += row[j] * input[j];
            }
            out[i] = if li < last { s.max(0.0) } else { s };
        }
        acts.push(out);
    }
}

/// Adds the gradient of `Σ_k (y_k − u_k)² · scale_k` for one sample to `grad`.
fn backward(sh: &Shapes, p: &[f64], acts: &[Vector], u: &[f64], weight: f64, grad: &mut [f64]) -> f64 {
    let last = sh.layers.len() - 1;
    let y = &acts[last + 1];
    let mut loss = 0.0;
    let mut delta: Vector = y.iter().zip(u).map(|(yi, ui)| {
        let e = yi - ui;
        loss += e * e;
        2.0 * weight * e
    }).collect();
    for li in (0..=last).rev() {
        let (r, c, wo, bo) = sh.layers[li];
        let input = &acts[li];
        for i in 0..r {
            let d = delta[i];
            if d == 0.0 {
                continue;
            }
            grad[bo + i] += d;
            let g = &mut grad[wo + i * c..wo + (i + 1) * c];
            for j in 0..c {
                g[j] += d * input[j];
            }
        }
        if li == 0 {
            break;
        }
        let mut prev = vec![0.0; c];
        for i in 0..r {
            let d = delta[i];
            if d == 0.0 {
                continue;
            }
            let row = &p[wo + i * c..wo + (i + 1) * c];
            for j in 0..c {
                prev[j] += row[j] * d;
            }
        }
        // ReLU derivative of the previous hidden layer
        for (j, pj) in prev.iter_mut().enumerate() {
            if input[j] <= 0.0 {
                *pj = 0.0;
            }
        }
        delta = prev;
    }
    loss
}

/// Mean squared error `(1/n) Σ ‖N(xᵢ) − uᵢ‖²` and its gradient with respect
/// to [`ReluNetwork::params`].
pub fn loss_and_gradient(net: &ReluNetwork, xs: &[Vector], us: &[Vector]) -> Result<(f64, Vector)> {
    dim_check(xs.len() == us.len() && !xs.is_empty(), || "inputs and targets must be nonempty and of equal count".into())?;
    let sh = Shapes::of(net);
    let p = net.params();
    let mut grad = vec![0.0; sh.n_params];
    let mut acts = Vec::new();
    let w = 1.0 / xs.len() as f64;
    let mut loss = 0.0;
    for (x, u) in xs.iter().zip(us) {
        dim_check(x.len() == net.n_x() && u.len() == net.n_u(), || "sample dimensions".into())?;
        forward(&sh, &p, x, &mut acts);
        loss += backward(&sh, &p, &acts, u, w, &mut grad);
    }
    Ok((loss * w, grad))
}

pub fn mse(net: &ReluNetwork, data: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for (x, u) in &data.points {
        let y = net.eval(x)?;
        total += y.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / data.len() as f64)
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub net: ReluNetwork,
    pub final_mse: f64,
    /// Full-dataset MSE after each epoch.
    pub loss_history: Vec<f64>,
}

fn mean_std(cols: impl Iterator<Item = Vec<f64>>) -> (Vector, Vector) {
    let cols: Vec<Vec<f64>> = cols.collect();
    let mean: Vector = cols.iter().map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let std = cols
        .iter()
        .zip(&mean)
        .map(|(c, m)| {
            let s = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / c.len() as f64).sqrt();
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

/// Rewrites a network trained on `(x − μx)/σx ↦ (u − μu)/σu` as one acting on
/// raw `x` and producing raw `u`.
fn fold_scaling(net: &mut ReluNetwork, mx: &[f64], sx: &[f64], mu: &[f64], su: &[f64]) {
    let layers = net.layers_mut();
    let first = &mut layers[0];
    for i in 0..first.w.rows() {
        let mut shift = 0.0;
        for j in 0..first.w.cols() {
            first.w[(i, j)] /= sx[j];
            shift += first.w[(i, j)] * mx[j];
        }
        first.b[i] -= shift;
    }
    let last = layers.last_mut().expect("network has an output layer");
    for i in 0..last.w.rows() {
        for j in 0..last.w.cols() {
            last.w[(i, j)] *= su[i];
        }
        last.b[i] = last.b[i] * su[i] + mu[i];
    }
}

/// Glorot-uniform initialized network drawn from `rng`; biases zero.
pub fn init_network<R: Rng>(n_x: usize, n_u: usize, m: usize, l: usize, rng: &mut R) -> Result<ReluNetwork> {
    let mut net = ReluNetwork::zeros(n_x, n_u, m, l)?;
    for layer in net.layers_mut() {
        let (r, c) = (layer.w.rows(), layer.w.cols());
        let bound = (6.0 / (r + c) as f64).sqrt();
        for i in 0..r {
            for j in 0..c {
                layer.w[(i, j)] = rng.gen_range(-bound..bound);
            }
        }
    }
    Ok(net)
}

/// Mini-batch Adam on the mean squared error. Initialization uses stream 0
/// of the seed and shuffling stream 1, so runs are reproducible.
pub fn train_mlp(data: &Dataset, cfg: &TrainConfig) -> Result<TrainResult> {
    if data.is_empty() {
        return Err(Error::PreconditionViolated("empty dataset".into()));
    }
    cfg.validate(data.n_x)?;
    let (nx, nu) = (data.n_x, data.n_u);
    let (mx, sx, mu, su) = if cfg.standardize {
        let (mx, sx) = mean_std((0..nx).map(|j| data.points.iter().map(|(x, _)| x[j]).collect()));
        let (mu, su) = mean_std((0..nu).map(|j| data.points.iter().map(|(_, u)| u[j]).collect()));
        (mx, sx, mu, su)
    } else {
        (vec![0.0; nx], vec![1.0; nx], vec![0.0; nu], vec![1.0; nu])
    };
    let xs: Vec<Vector> = data.points.iter().map(|(x, _)| x.iter().zip(&mx).zip(&sx).map(|((v, m), s)| (v - m) / s).collect()).collect();
    let us: Vec<Vector> = data.points.iter().map(|(_, u)| u.iter().zip(&mu).zip(&su).map(|((v, m), s)| (v - m) / s).collect()).collect();
    let out_weight: Vector = su.iter().map(|s| s * s).collect();

    let mut net = init_network(nx, nu, cfg.m, cfg.l, &mut index_rng(cfg.seed, 0))?;
    let mut shuffle_rng = index_rng(cfg.seed, 1);
    let sh = Shapes::of(&net);
    let mut p = net.params();
    let mut state = AdamState::new(sh.n_params);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut acts = Vec::new();
    let mut grad = vec![0.0; sh.n_params];
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut adam = cfg.adam();
    for epoch in 0..cfg.epochs {
        adam.learning_rate = cfg.learning_rate_at(epoch);
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let w = 1.0 / batch.len() as f64;
            for &i in batch {
                forward(&sh, &p, &xs[i], &mut acts);
                backward(&sh, &p, &acts, &us[i], w, &mut grad);
            }
            let (np, ns) = adam_update(&p, &grad, &state, &adam);
            p = np;
            state = ns;
        }
        // full-data error in the original output units
        let mut total = 0.0;
        for (x, u) in xs.iter().zip(&us) {
            forward(&sh, &p, x, &mut acts);
            let y = &acts[acts.len() - 1];
            total += y.iter().zip(u).zip(&out_weight).map(|((a, b), w)| w * (a - b) * (a - b)).sum::<f64>();
        }
        let loss = total / xs.len() as f64;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, loss });
        }
        history.push(loss);
    }
    net.set_params(&p)?;
    fold_scaling(&mut net, &mx, &sx, &mu, &su);
    let final_mse = mse(&net, data)?;
    if !final_mse.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: cfg.epochs, loss: final_mse });
    }
    Ok(TrainResult { net, final_mse, loss_history: history })
}
