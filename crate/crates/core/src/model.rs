//! Fully connected noise predictor `ε_θ(x_t, t)` with an exposed bottleneck.
//!
//! Layout for `layer_sizes = [d, H, b, H, d]`:
//!
//! ```text
//! [x_t ; temb(t)] -> H (SiLU) -> b = h (linear) -> H (SiLU) -(+)-> d (linear)
//!                    |______________ additive skip ___________|
//! ```
//!
//! The first layer sees the input concatenated with a sinusoidal time
//! embedding of width `time_embed_dim`. Each encoder activation is added to
//! the activation of the mirrored decoder layer when the widths agree, the
//! way U-Net skips route fine detail around the bottleneck; without it the
//! full-rank noise could not pass a `d/8` bottleneck. The skips carry no
//! parameters, so the parameter count is `Σ (fan_in + 1)·fan_out` with the
//! first fan-in widened by the embedding.
//!
//! The bottleneck activation `h` is linear and can be replaced on the way
//! down with [`NoisePredictor::predict_noise_with_injection`].
//!
//! An optional [`Preconditioner`] turns the raw network output `F` into
//! `ε̂ = c_skip(t)·x_t + c_out(t)·F`, with
//!
//! * `c_skip = √(1−ᾱ)/(ᾱ·m₂ + 1 − ᾱ)`, the best linear noise estimate for
//!   data of per-pixel second moment `m₂`,
//! * `c_out = √(ᾱ·m₂/(ᾱ·m₂ + 1 − ᾱ))`, the spread left after that estimate.
//!
//! At high noise the target is almost exactly `x_t`, which an MLP otherwise
//! reproduces poorly. The preconditioner has no trainable parameters.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::{self, tag};
use crate::schedule::NoiseSchedule;

const MAX_PERIOD: f64 = 10_000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct NoisePredictor {
    layer_sizes: Vec<usize>,
    time_embed_dim: usize,
    bottleneck_index: usize,
    train_steps: u64,
    precond: Option<Preconditioner>,
    params: Vec<f64>,
}

/// Parameter-free output scaling `ε̂ = c_skip(t)·x_t + c_out(t)·F`.
#[derive(Debug, Clone, PartialEq)]
pub struct Preconditioner {
    second_moment: f64,
    /// `(c_skip, c_out)` for `t = 0..=T`.
    gains: Vec<(f64, f64)>,
}

impl Preconditioner {
    pub fn new(schedule: &NoiseSchedule, second_moment: f64) -> Result<Self> {
        if !(second_moment > 0.0 && second_moment.is_finite()) {
            return Err(Error::invalid("data second moment must be positive"));
        }
        let gains = (0..=schedule.steps())
            .map(|t| {
                let a = schedule.alpha_bar(t);
                let denom = a * second_moment + 1.0 - a;
                ((1.0 - a).sqrt() / denom, (a * second_moment / denom).sqrt())
            })
            .collect();
        Ok(Self { second_moment, gains })
    }

    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    /// `(c_skip, c_out)` at step `t`, clamped to the schedule.
    pub fn gains(&self, t: f64) -> (f64, f64) {
        let idx = (t.round().max(0.0) as usize).min(self.gains.len() - 1);
        self.gains[idx]
    }
}

/// Output of a batched forward pass.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub noise: Array2<f64>,
    pub h: Array2<f64>,
}

struct Layer {
    fan_in: usize,
    fan_out: usize,
    offset: usize,
}

struct Cache {
    /// `inputs[l]` is the input of weight layer `l`.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of every weight layer.
    pre: Vec<Array2<f64>>,
    out: Array2<f64>,
}

fn silu(z: f64) -> f64 {
    z / (1.0 + (-z).exp())
}

fn silu_grad(z: f64) -> f64 {
    let s = 1.0 / (1.0 + (-z).exp());
    s * (1.0 + z * (1.0 - s))
}

/// Sinusoidal embedding `[sin(t·f_k), cos(t·f_k)]` with
/// `f_k = MAX_PERIOD^(−k/half)`.
pub fn time_embedding(t: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for k in 0..half {
        let freq = (-(MAX_PERIOD.ln()) * k as f64 / half as f64).exp();
        out[k] = (t * freq).sin();
        out[half + k] = (t * freq).cos();
    }
    out
}

impl NoisePredictor {
    /// Initialize with the bottleneck at the narrowest interior layer.
    ///
    /// Weights are drawn from `U(−1/√fan_in, 1/√fan_in)`, biases start at
    /// zero, and every value is rounded to `f32` so checkpoints round-trip
    /// exactly.
    pub fn new(layer_sizes: Vec<usize>, time_embed_dim: usize, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 3 {
            return Err(Error::invalid("need at least three layer sizes"));
        }
        let interior = &layer_sizes[1..layer_sizes.len() - 1];
        let (pos, _) = interior.iter().enumerate().min_by_key(|(_, &s)| s).expect("non-empty interior");
        Self::with_bottleneck(layer_sizes, time_embed_dim, pos + 1, seed)
    }

    pub fn with_bottleneck(
        layer_sizes: Vec<usize>,
        time_embed_dim: usize,
        bottleneck_index: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut model = Self::zeros(layer_sizes, time_embed_dim, bottleneck_index)?;
        let mut rng = rng::stream(seed, tag::INIT, 0);
        let layers: Vec<Layer> = model.layers().collect();
        for layer in layers {
            let bound = 1.0 / (layer.fan_in as f64).sqrt();
            let n = layer.fan_in * layer.fan_out;
            for p in &mut model.params[layer.offset..layer.offset + n] {
                *p = rng.random_range(-bound..bound);
            }
        }
        model.quantize();
        Ok(model)
    }

    /// All-zero parameters; predicts zero noise everywhere.
    pub fn zeros(layer_sizes: Vec<usize>, time_embed_dim: usize, bottleneck_index: usize) -> Result<Self> {
        if layer_sizes.len() < 3 {
            return Err(Error::invalid("need at least three layer sizes"));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        let d = layer_sizes[0];
        if *layer_sizes.last().unwrap() != d {
            return Err(Error::invalid("output width must equal input width"));
        }
        if bottleneck_index == 0 || bottleneck_index >= layer_sizes.len() - 1 {
            return Err(Error::invalid("bottleneck must be an interior layer"));
        }
        if layer_sizes[bottleneck_index] >= d {
            return Err(Error::invalid(format!(
                "bottleneck width {} must be smaller than data dimension {d}",
                layer_sizes[bottleneck_index]
            )));
        }
        let mut model =
            Self { layer_sizes, time_embed_dim, bottleneck_index, train_steps: 0, precond: None, params: Vec::new() };
        model.params = vec![0.0; model.expected_param_count()];
        Ok(model)
    }

    /// Rebuild from stored parts (checkpoint loading).
    pub fn from_parts(
        layer_sizes: Vec<usize>,
        time_embed_dim: usize,
        bottleneck_index: usize,
        train_steps: u64,
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut model = Self::zeros(layer_sizes, time_embed_dim, bottleneck_index)?;
        check_dim(model.params.len(), params.len())?;
        model.params = params;
        model.train_steps = train_steps;
        Ok(model)
    }

    fn expected_param_count(&self) -> usize {
        self.layers().map(|l| (l.fan_in + 1) * l.fan_out).sum()
    }

    fn layers(&self) -> impl Iterator<Item = Layer> + '_ {
        let mut offset = 0;
        self.layer_sizes.windows(2).enumerate().map(move |(i, w)| {
            let fan_in = if i == 0 { w[0] + self.time_embed_dim } else { w[0] };
            let layer = Layer { fan_in, fan_out: w[1], offset };
            offset += (fan_in + 1) * w[1];
            layer
        })
    }

    fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Decoder activation (size index) that receives the skip from the
    /// encoder activation at size index `i`.
    fn skip_target(&self, i: usize) -> Option<usize> {
        let n = self.layer_sizes.len() - 1;
        if i == 0 || i >= self.bottleneck_index {
            return None;
        }
        let j = n - i;
        (j > self.bottleneck_index && self.layer_sizes[i] == self.layer_sizes[j]).then_some(j)
    }

    fn skip_source(&self, j: usize) -> Option<usize> {
        (1..self.bottleneck_index).find(|&i| self.skip_target(i) == Some(j))
    }

    fn is_linear(&self, layer: usize) -> bool {
        layer + 1 == self.bottleneck_index || layer + 1 == self.n_layers()
    }

    fn weights(&self, l: &Layer) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((l.fan_out, l.fan_in), &self.params[l.offset..l.offset + l.fan_in * l.fan_out])
            .expect("layer shape")
    }

    fn bias(&self, l: &Layer) -> ArrayView1<'_, f64> {
        let start = l.offset + l.fan_in * l.fan_out;
        ArrayView1::from(&self.params[start..start + l.fan_out])
    }

    /// Attach (or remove) output preconditioning.
    pub fn with_preconditioner(mut self, precond: Option<Preconditioner>) -> Self {
        self.precond = precond;
        self
    }

    pub fn preconditioner(&self) -> Option<&Preconditioner> {
        self.precond.as_ref()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn time_embed_dim(&self) -> usize {
        self.time_embed_dim
    }

    pub fn bottleneck_index(&self) -> usize {
        self.bottleneck_index
    }

    pub fn data_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.layer_sizes[self.bottleneck_index]
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Number of optimizer updates applied so far.
    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn is_trained(&self) -> bool {
        self.train_steps > 0
    }

    /// Round every parameter to the nearest `f32`.
    pub fn quantize(&mut self) {
        for p in &mut self.params {
            *p = *p as f32 as f64;
        }
    }

    fn input_matrix(&self, xs: ArrayView2<'_, f64>, ts: &[f64]) -> Result<Array2<f64>> {
        check_dim(self.data_dim(), xs.ncols())?;
        check_dim(xs.nrows(), ts.len())?;
        let d = self.data_dim();
        let mut input = Array2::zeros((xs.nrows(), d + self.time_embed_dim));
        input.slice_mut(s![.., ..d]).assign(&xs);
        if self.time_embed_dim > 0 {
            for (mut row, &t) in input.rows_mut().into_iter().zip(ts) {
                let emb = time_embedding(t, self.time_embed_dim);
                row.slice_mut(s![d..]).assign(&ArrayView1::from(&emb));
            }
        }
        Ok(input)
    }

    fn forward(&self, xs: ArrayView2<'_, f64>, ts: &[f64], h_override: Option<ArrayView2<'_, f64>>) -> Result<Cache> {
        if let Some(h) = &h_override {
            check_dim(self.bottleneck_dim(), h.ncols())?;
            check_dim(xs.nrows(), h.nrows())?;
        }
        let layers: Vec<Layer> = self.layers().collect();
        let mut inputs = Vec::with_capacity(layers.len());
        let mut pre: Vec<Array2<f64>> = Vec::with_capacity(layers.len());
        let mut current = self.input_matrix(xs, ts)?;
        for (l, layer) in layers.iter().enumerate() {
            let mut z = current.dot(&self.weights(layer).t());
            z += &self.bias(layer);
            let mut a = if self.is_linear(l) { z.clone() } else { z.mapv(silu) };
            if let Some(src) = self.skip_source(l + 1) {
                // inputs[src] holds the activation at size index `src`
                a += &inputs[src];
            }
            if l + 1 == self.bottleneck_index {
                if let Some(h) = &h_override {
                    a.assign(h);
                }
            }
            inputs.push(current);
            pre.push(z);
            current = a;
        }
        if let Some(pc) = &self.precond {
            for ((mut row, x), &t) in current.rows_mut().into_iter().zip(xs.rows()).zip(ts) {
                let (c_skip, c_out) = pc.gains(t);
                row *= c_out;
                row.scaled_add(c_skip, &x);
            }
        }
        Ok(Cache { inputs, pre, out: current })
    }

    /// Batched forward pass over rows of `xs` at per-row steps `ts`.
    pub fn predict_batch(&self, xs: ArrayView2<'_, f64>, ts: &[f64]) -> Result<Prediction> {
        let cache = self.forward(xs, ts, None)?;
        let h = cache.inputs[self.bottleneck_index].clone();
        Ok(Prediction { noise: cache.out, h })
    }

    /// Batched forward pass with the bottleneck replaced by `hs`.
    pub fn predict_batch_with_injection(
        &self,
        xs: ArrayView2<'_, f64>,
        ts: &[f64],
        hs: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>> {
        Ok(self.forward(xs, ts, Some(hs))?.out)
    }

    /// Noise estimate and bottleneck activation for one latent.
    pub fn predict_noise(&self, x: &[f64], t: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("row");
        let p = self.predict_batch(xs, &[t as f64])?;
        Ok((p.noise.into_raw_vec_and_offset().0, p.h.into_raw_vec_and_offset().0))
    }

    pub fn predict_noise_with_injection(&self, x: &[f64], t: usize, h: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.bottleneck_dim(), h.len())?;
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("row");
        let hs = ArrayView2::from_shape((1, h.len()), h).expect("row");
        Ok(self.predict_batch_with_injection(xs, &[t as f64], hs)?.into_raw_vec_and_offset().0)
    }

    /// Backpropagate `grad_out` (gradient w.r.t. the network output).
    /// Returns parameter gradients and the gradient w.r.t. the data input.
    fn backward(&self, cache: &Cache, ts: &[f64], grad_out: Array2<f64>) -> (Vec<f64>, Array2<f64>) {
        let mut grad_out = grad_out;
        let skip_grad = self.precond.as_ref().map(|pc| {
            let mut g = grad_out.clone();
            for ((mut gs, mut go), &t) in g.rows_mut().into_iter().zip(grad_out.rows_mut()).zip(ts) {
                let (c_skip, c_out) = pc.gains(t);
                gs *= c_skip;
                go *= c_out;
            }
            g
        });
        let layers: Vec<Layer> = self.layers().collect();
        let mut grads = vec![0.0; self.params.len()];
        // gradient w.r.t. each activation that feeds a skip, by size index
        let mut dact: Vec<Option<Array2<f64>>> = vec![None; self.layer_sizes.len()];
        let mut upstream = grad_out;
        let mut input_grad = Array2::zeros((0, 0));
        for l in (0..layers.len()).rev() {
            let layer = &layers[l];
            if self.skip_source(l + 1).is_some() {
                dact[l + 1] = Some(upstream.clone());
            }
            let dz_l = if self.is_linear(l) {
                upstream
            } else {
                let mut g = upstream;
                g.zip_mut_with(&cache.pre[l], |g, &z| *g *= silu_grad(z));
                g
            };
            let dw = dz_l.t().dot(&cache.inputs[l]);
            let db = dz_l.sum_axis(Axis(0));
            let n = layer.fan_in * layer.fan_out;
            grads[layer.offset..layer.offset + n].copy_from_slice(dw.as_slice().expect("contiguous"));
            grads[layer.offset + n..layer.offset + n + layer.fan_out]
                .copy_from_slice(db.as_slice().expect("contiguous"));
            let mut da = dz_l.dot(&self.weights(layer));
            // inputs[l] is the activation at size index l; add skip gradient
            if let Some(target) = self.skip_target(l) {
                da += dact[target].as_ref().expect("decoder gradient computed first");
            }
            if l == 0 {
                input_grad = da.slice(s![.., ..self.data_dim()]).to_owned();
                if let Some(g) = &skip_grad {
                    input_grad += g;
                }
                break;
            }
            upstream = da;
        }
        (grads, input_grad)
    }

    /// Mean-squared error against `target` and its parameter gradient.
    ///
    /// The loss averages over every element of the batch.
    pub fn loss_and_gradient(
        &self,
        xs: ArrayView2<'_, f64>,
        ts: &[f64],
        target: ArrayView2<'_, f64>,
    ) -> Result<(f64, Vec<f64>)> {
        check_dim(self.data_dim(), target.ncols())?;
        check_dim(xs.nrows(), target.nrows())?;
        let cache = self.forward(xs, ts, None)?;
        let diff = &cache.out - &target;
        let scale = 1.0 / diff.len() as f64;
        let loss = diff.mapv(|v| v * v).sum() * scale;
        let grad_out = diff * (2.0 * scale);
        let (grads, _) = self.backward(&cache, ts, grad_out);
        Ok((loss, grads))
    }

    /// Gradient of `‖ε_θ(x, t)‖²` with respect to `x`.
    pub fn output_norm_input_gradient(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("row");
        let cache = self.forward(xs, &[t as f64], None)?;
        let grad_out = &cache.out * 2.0;
        let (_, g) = self.backward(&cache, &[t as f64], grad_out);
        Ok(g.into_raw_vec_and_offset().0)
    }

    /// Gradient of `‖ε_θ(x, t)‖²` with respect to the parameters.
    pub fn output_norm_param_gradient(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("row");
        let cache = self.forward(xs, &[t as f64], None)?;
        let grad_out = &cache.out * 2.0;
        Ok(self.backward(&cache, &[t as f64], grad_out).0)
    }
}

/// Layer widths `[d, 2d, d/8, 2d, d]`; the bottleneck is `d/8` wide.
pub fn default_layer_sizes(d: usize) -> Vec<usize> {
    vec![d, 2 * d, (d / 8).max(1), 2 * d, d]
}

pub const DEFAULT_TIME_EMBED_DIM: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// `θ ← θ − lr·g`
    Sgd,
    /// Adam with β = (0.9, 0.999), ε = 1e-8.
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    #[serde(default)]
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 400, batch_size: 64, learning_rate: 1e-3, seed: 0, optimizer: Optimizer::Adam }
    }
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl AdamState {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    fn apply(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::B1.powi(self.step);
        let c2 = 1.0 - Self::B2.powi(self.step);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Fit `ε_θ` with the simplified DDPM objective: MSE between drawn and
/// predicted noise at uniformly drawn steps. Adam runs on a cosine-decayed
/// step; SGD keeps the step fixed.
///
/// Returns the trained model and the mean loss of every epoch.
pub fn train_predictor(
    predictor: &NoisePredictor,
    dataset: &[Vec<f64>],
    schedule: &NoiseSchedule,
    config: &TrainConfig,
) -> Result<(NoisePredictor, Vec<f64>)> {
    if dataset.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if config.batch_size == 0 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::invalid("learning_rate must be finite and non-negative"));
    }
    let d = predictor.data_dim();
    for x in dataset {
        check_dim(d, x.len())?;
    }
    let mut model = predictor.clone();
    let mut rng = rng::stream(config.seed, tag::TRAIN, 0);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let steps = schedule.steps();
    let mut curve = Vec::with_capacity(config.epochs);
    let mut adam = AdamState::new(model.params.len());
    let total_updates = config.epochs * dataset.len().div_ceil(config.batch_size);
    let mut update = 0usize;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let b = chunk.len();
            let mut xt = Array2::zeros((b, d));
            let mut noise = Array2::zeros((b, d));
            let mut ts = Vec::with_capacity(b);
            for (row, &idx) in chunk.iter().enumerate() {
                let t = rng.random_range(1..=steps);
                let eps = rng::gaussian_vec(&mut rng, d);
                let a = schedule.alpha_bar(t);
                let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
                for j in 0..d {
                    xt[[row, j]] = sa * dataset[idx][j] + sn * eps[j];
                    noise[[row, j]] = eps[j];
                }
                ts.push(t as f64);
            }
            let (loss, grads) = model.loss_and_gradient(xt.view(), &ts, noise.view())?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss diverged at epoch {epoch} (lr {})",
                    config.learning_rate
                )));
            }
            match config.optimizer {
                Optimizer::Sgd => {
                    for (p, g) in model.params.iter_mut().zip(&grads) {
                        *p -= config.learning_rate * g;
                    }
                }
                Optimizer::Adam => {
                    let progress = update as f64 / total_updates as f64;
                    let lr = config.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
                    adam.apply(&mut model.params, &grads, lr);
                }
            }
            update += 1;
            model.train_steps += 1;
            total += loss;
            batches += 1;
        }
        curve.push(total / batches as f64);
    }
    model.quantize();
    Ok((model, curve))
}

/// Convenience: a zero-parameter predictor for `d`, used where an
/// "untrained, ε̂ ≡ 0" model is needed.
pub fn zero_predictor(d: usize) -> NoisePredictor {
    let sizes = default_layer_sizes(d);
    NoisePredictor::zeros(sizes, DEFAULT_TIME_EMBED_DIM, 2).expect("valid default sizes")
}

/// Column vector helper for tests and callers holding a single latent.
pub fn as_row(x: &[f64]) -> Array2<f64> {
    Array1::from(x.to_vec()).insert_axis(Axis(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> NoisePredictor {
        NoisePredictor::new(vec![6, 10, 3, 10, 6], 4, 11).unwrap()
    }

    #[test]
    fn parameter_count_matches_formula() {
        let m = NoisePredictor::new(vec![4, 8, 2, 8, 4], 0, 1).unwrap();
        assert_eq!(m.param_count(), 40 + 18 + 24 + 36);
        assert_eq!(m.param_count(), 118);
        let m = NoisePredictor::new(vec![4, 8, 2, 8, 4], 6, 1).unwrap();
        assert_eq!(m.param_count(), 118 + 6 * 8);
    }

    #[test]
    fn init_is_seeded() {
        let a = small();
        let b = small();
        assert_eq!(a.params(), b.params());
        let c = NoisePredictor::new(vec![6, 10, 3, 10, 6], 4, 12).unwrap();
        assert_ne!(a.params(), c.params());
        assert!(a.params().iter().all(|&p| p == p as f32 as f64));
    }

    #[test]
    fn rejects_wide_bottleneck() {
        assert!(NoisePredictor::new(vec![4, 8, 4], 0, 1).is_err());
        assert!(NoisePredictor::new(vec![4, 8], 0, 1).is_err());
        assert!(NoisePredictor::new(vec![4, 2, 5], 0, 1).is_err());
    }

    #[test]
    fn zero_params_predict_zero() {
        let m = NoisePredictor::zeros(vec![6, 10, 3, 10, 6], 4, 2).unwrap();
        let (eps, h) = m.predict_noise(&[0.3, -1.0, 2.0, 0.1, 0.0, 5.0], 7).unwrap();
        assert!(eps.iter().all(|&v| v == 0.0));
        assert_eq!(h.len(), 3);
    }

    #[test]
    fn forward_is_pure() {
        let m = small();
        let x = [0.1, 0.2, -0.3, 0.4, -0.5, 0.6];
        assert_eq!(m.predict_noise(&x, 5).unwrap(), m.predict_noise(&x, 5).unwrap());
        assert!(m.predict_noise(&x[..5], 5).is_err());
    }

    #[test]
    fn self_injection_is_identity() {
        let m = small();
        let x = [0.1, 0.2, -0.3, 0.4, -0.5, 0.6];
        let (eps, h) = m.predict_noise(&x, 9).unwrap();
        assert_eq!(m.predict_noise_with_injection(&x, 9, &h).unwrap(), eps);
        assert!(m.predict_noise_with_injection(&x, 9, &[0.0; 2]).is_err());
    }

    #[test]
    fn zero_injection_runs_decoder_on_zeros() {
        let m = small();
        let x = [0.1, 0.2, -0.3, 0.4, -0.5, 0.6];
        let out = m.predict_noise_with_injection(&x, 3, &[0.0; 3]).unwrap();
        // decoder by hand: silu(b3) + skip -> W4
        let layers: Vec<Layer> = m.layers().collect();
        let xs = as_row(&x);
        let enc = m.forward(xs.view(), &[3.0], None).unwrap();
        let skip = &enc.inputs[1];
        let a3 = m.bias(&layers[2]).mapv(silu) + skip;
        let expect = a3.dot(&m.weights(&layers[3]).t()) + m.bias(&layers[3]);
        for (a, b) in out.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn distinct_injections_differ() {
        let m = small();
        let x = [0.1, 0.2, -0.3, 0.4, -0.5, 0.6];
        let mut r = rng::stream(3, tag::PROBE, 0);
        let h1 = rng::gaussian_vec(&mut r, 3);
        let h2 = rng::gaussian_vec(&mut r, 3);
        assert_ne!(
            m.predict_noise_with_injection(&x, 3, &h1).unwrap(),
            m.predict_noise_with_injection(&x, 3, &h2).unwrap()
        );
    }

    #[test]
    fn parameter_gradient_matches_central_differences() {
        let s = NoiseSchedule::desk(0.0);
        let m = small().with_preconditioner(Some(Preconditioner::new(&s, 0.4).unwrap()));
        let x = [0.3, -0.2, 0.5, 0.1, -0.7, 0.4];
        let t = 40;
        let g = m.output_norm_param_gradient(&x, t).unwrap();
        let f = |p: &NoisePredictor| p.predict_noise(&x, t).unwrap().0.iter().map(|v| v * v).sum::<f64>();
        let mut r = rng::stream(5, tag::PROBE, 1);
        for _ in 0..12 {
            let k = r.random_range(0..m.param_count());
            let h = 1e-5;
            let mut plus = m.clone();
            plus.params_mut()[k] += h;
            let mut minus = m.clone();
            minus.params_mut()[k] -= h;
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            let tol = 1e-4 * fd.abs().max(g[k].abs()).max(1e-6);
            assert!((fd - g[k]).abs() <= tol, "param {k}: fd {fd} analytic {}", g[k]);
        }
    }

    #[test]
    fn input_gradient_matches_central_differences() {
        let m = small();
        let x = vec![0.4, -0.2, 0.9, -1.1, 0.3, 0.05];
        let g = m.output_norm_input_gradient(&x, 6).unwrap();
        let f = |x: &[f64]| -> f64 { m.predict_noise(x, 6).unwrap().0.iter().map(|v| v * v).sum() };
        let h = 1e-5;
        for j in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            let rel = (fd - g[j]).abs() / fd.abs().max(g[j].abs()).max(1e-8);
            assert!(rel < 1e-4, "coord {j}: fd {fd} vs analytic {}", g[j]);
        }
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let m = small();
        let data = vec![vec![0.5; 6]; 4];
        let cfg = TrainConfig { epochs: 2, batch_size: 2, learning_rate: 0.0, seed: 1, optimizer: Optimizer::Sgd };
        let (trained, _) = train_predictor(&m, &data, &NoiseSchedule::desk(1.0), &cfg).unwrap();
        assert_eq!(trained.params(), m.params());
    }

    #[test]
    fn training_errors() {
        let m = small();
        let cfg = TrainConfig::default();
        let s = NoiseSchedule::desk(1.0);
        assert!(train_predictor(&m, &[], &s, &cfg).is_err());
        assert!(train_predictor(&m, &[vec![0.0; 5]], &s, &cfg).is_err());
        let bad = TrainConfig { learning_rate: 1e6, epochs: 20, optimizer: Optimizer::Sgd, ..TrainConfig::default() };
        let err = train_predictor(&m, &vec![vec![50.0; 6]; 8], &s, &bad).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)), "{err}");
    }
}
