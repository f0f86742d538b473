//! Dense feed-forward networks: forward pass, analytic backpropagation,
//! inverted dropout, Adam, and a sigmoid-output binary classifier.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linear::sigmoid;
use crate::rng::{seeded, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    /// Derivative given the pre-activation `z` and output `h`.
    fn derivative(self, z: f64, h: f64) -> f64 {
        match self {
            Activation::Sigmoid => h * (1.0 - h),
            Activation::Tanh => 1.0 - h * h,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::InvalidParameter(format!("unknown activation `{other}`"))),
        }
    }
}

/// `h = φ(W x + b)` with `W` stored row-major as outputs × inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Vec<Vec<f64>>, biases: Vec<f64>, activation: Activation) -> Result<Self> {
        let outputs = weights.len();
        let inputs = weights.first().map_or(0, Vec::len);
        if outputs == 0 || inputs == 0 || weights.iter().any(|r| r.len() != inputs) || biases.len() != outputs {
            return Err(Error::Shape("dense layer weights must be a non-empty out x in matrix with one bias per output".into()));
        }
        Ok(DenseLayer {
            inputs,
            outputs,
            weights: weights.concat(),
            biases,
            activation,
        })
    }

    /// Uniform(±√(6/(in+out))) weights, zero biases.
    fn glorot(inputs: usize, outputs: usize, activation: Activation, rng: &mut Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        DenseLayer {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.random_range(-limit..limit)).collect(),
            biases: vec![0.0; outputs],
            activation,
        }
    }

    fn pre_activation(&self, x: &[f64], z: &mut Vec<f64>) {
        z.clear();
        z.extend(self.weights.chunks_exact(self.inputs).zip(&self.biases).map(|(w, b)| {
            b + w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>()
        }));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<DenseLayer>,
    /// Dropout rate applied to each layer's output while training; 0 = none.
    pub dropout: Vec<f64>,
    /// Seed used for weight initialization.
    pub seed: u64,
}

/// Forward-pass mode. Training applies inverted dropout drawn from the rng.
pub enum Mode<'a> {
    Inference,
    Training(&'a mut Rng),
}

/// Per-layer record of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `activations[0]` is the input; `activations[l + 1]` the (dropped-out)
    /// output of layer `l`.
    pub activations: Vec<Vec<f64>>,
    pub pre_activations: Vec<Vec<f64>>,
    /// Output of each layer before dropout.
    pub outputs: Vec<Vec<f64>>,
    /// Scaled keep masks (`0` or `1/(1-p)`), `None` where no dropout applied.
    pub masks: Vec<Option<Vec<f64>>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has the input at least")
    }
}

/// Parameters in `(in + 1) · out` per consecutive pair of layer sizes.
pub fn param_count(arch: &[usize]) -> Result<usize> {
    if arch.len() < 2 {
        return Err(Error::InvalidParameter("architecture needs at least an input and an output size".into()));
    }
    Ok(arch.windows(2).map(|w| (w[0] + 1) * w[1]).sum())
}

impl Network {
    /// Glorot-initialized network over `sizes` (input first) with one
    /// activation per layer.
    pub fn new(sizes: &[usize], activations: &[Activation], dropout: &[f64], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidParameter("network needs >= 2 non-zero layer sizes".into()));
        }
        let n_layers = sizes.len() - 1;
        if activations.len() != n_layers {
            return Err(Error::Shape(format!("{} activations for {n_layers} layers", activations.len())));
        }
        let mut rates = dropout.to_vec();
        if rates.len() > n_layers {
            return Err(Error::Shape(format!("{} dropout rates for {n_layers} layers", rates.len())));
        }
        rates.resize(n_layers, 0.0);
        if rates.iter().any(|&p| !(0.0..1.0).contains(&p)) {
            return Err(Error::InvalidParameter("dropout rates must lie in [0, 1)".into()));
        }
        let mut rng = seeded(seed);
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &a)| DenseLayer::glorot(w[0], w[1], a, &mut rng))
            .collect();
        Ok(Network { layers, dropout: rates, seed })
    }

    /// Network from explicit layers, without dropout.
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].outputs != w[1].inputs {
                return Err(Error::Shape(format!("layer sizes do not chain: {} -> {}", w[0].outputs, w[1].inputs)));
            }
        }
        let n = layers.len();
        Ok(Network { layers, dropout: vec![0.0; n], seed: 0 })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.layers.iter().map(|l| l.outputs)).collect()
    }

    pub fn forward(&self, x: &[f64], mut mode: Mode<'_>) -> Result<Trace> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!("input has {} values, network expects {}", x.len(), self.input_dim())));
        }
        let n = self.layers.len();
        let mut trace = Trace {
            activations: Vec::with_capacity(n + 1),
            pre_activations: Vec::with_capacity(n),
            outputs: Vec::with_capacity(n),
            masks: Vec::with_capacity(n),
        };
        trace.activations.push(x.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.pre_activation(&trace.activations[l], &mut z);
            let h: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            let p = self.dropout[l];
            let (a, mask) = match &mut mode {
                Mode::Training(rng) if p > 0.0 => {
                    let keep = 1.0 / (1.0 - p);
                    let mask: Vec<f64> = (0..h.len())
                        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                        .collect();
                    (h.iter().zip(&mask).map(|(a, m)| a * m).collect(), Some(mask))
                }
                _ => (h.clone(), None),
            };
            trace.pre_activations.push(z);
            trace.outputs.push(h);
            trace.masks.push(mask);
            trace.activations.push(a);
        }
        Ok(trace)
    }

    /// Inference-mode output.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut a = x.to_vec();
        if a.len() != self.input_dim() {
            return Err(Error::Shape(format!("input has {} values, network expects {}", a.len(), self.input_dim())));
        }
        let mut z = Vec::new();
        for layer in &self.layers {
            layer.pre_activation(&a, &mut z);
            a.clear();
            a.extend(z.iter().map(|&v| layer.activation.apply(v)));
        }
        Ok(a)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// All weights then biases, layer by layer.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape(format!("{} parameters for a network with {}", params.len(), self.param_count())));
        }
        let mut at = 0;
        for l in &mut self.layers {
            let w = l.weights.len();
            l.weights.copy_from_slice(&params[at..at + w]);
            at += w;
            let b = l.biases.len();
            l.biases.copy_from_slice(&params[at..at + b]);
            at += b;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    BinaryCrossEntropy,
    CosineProximity,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "binary_cross_entropy" | "bce" => Ok(LossKind::BinaryCrossEntropy),
            "cosine_proximity" => Ok(LossKind::CosineProximity),
            other => Err(Error::InvalidParameter(format!("unknown loss `{other}`"))),
        }
    }
}

const NORM_FLOOR: f64 = 1e-12;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Loss of one prediction vector against its target.
///
/// mse: mean squared error; bce: `-mean[y ln ŷ + (1-y) ln(1-ŷ)]`;
/// cosine proximity: `-cos(ŷ, y)`, 0 when either norm is below 1e-12.
pub fn loss(kind: LossKind, predicted: &[f64], target: &[f64]) -> Result<f64> {
    if predicted.len() != target.len() || predicted.is_empty() {
        return Err(Error::Shape(format!("loss over {} predictions and {} targets", predicted.len(), target.len())));
    }
    if kind == LossKind::BinaryCrossEntropy && predicted.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::InvalidParameter("cross-entropy needs predictions in (0, 1)".into()));
    }
    Ok(loss_unchecked(kind, predicted, target))
}

fn loss_unchecked(kind: LossKind, p: &[f64], y: &[f64]) -> f64 {
    let d = p.len() as f64;
    match kind {
        LossKind::Mse => p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / d,
        LossKind::BinaryCrossEntropy => {
            -p.iter()
                .zip(y)
                .map(|(&a, &b)| {
                    let a = a.clamp(1e-15, 1.0 - 1e-15);
                    b * a.ln() + (1.0 - b) * (1.0 - a).ln()
                })
                .sum::<f64>()
                / d
        }
        LossKind::CosineProximity => {
            let (np, ny) = (dot(p, p).sqrt(), dot(y, y).sqrt());
            if np < NORM_FLOOR || ny < NORM_FLOOR {
                0.0
            } else {
                -dot(p, y) / (np * ny)
            }
        }
    }
}

/// d loss / d prediction.
fn loss_gradient(kind: LossKind, p: &[f64], y: &[f64]) -> Vec<f64> {
    let d = p.len() as f64;
    match kind {
        LossKind::Mse => p.iter().zip(y).map(|(a, b)| 2.0 * (a - b) / d).collect(),
        LossKind::BinaryCrossEntropy => p
            .iter()
            .zip(y)
            .map(|(&a, &b)| {
                let a = a.clamp(1e-15, 1.0 - 1e-15);
                (a - b) / (a * (1.0 - a) * d)
            })
            .collect(),
        LossKind::CosineProximity => {
            let (np, ny) = (dot(p, p).sqrt(), dot(y, y).sqrt());
            if np < NORM_FLOOR || ny < NORM_FLOOR {
                return vec![0.0; p.len()];
            }
            let py = dot(p, y);
            p.iter()
                .zip(y)
                .map(|(&a, &b)| -(b / (np * ny) - py * a / (np * np * np * ny)))
                .collect()
        }
    }
}

/// Gradient blocks mirroring [`Network::params`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros(net: &Network) -> Self {
        Gradients {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

/// Rows and targets for one gradient evaluation, both row-major.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub inputs: &'a [f64],
    pub targets: &'a [f64],
    pub rows: usize,
}

/// Mean batch objective: mean per-row loss plus, when `activity_l2 > 0`,
/// `activity_l2 · mean_rows Σ h²` over the first layer's output.
pub fn objective(net: &Network, batch: Batch<'_>, kind: LossKind, activity_l2: f64) -> Result<f64> {
    check_batch(net, batch)?;
    let (din, dout) = (net.input_dim(), net.output_dim());
    let mut total = 0.0;
    for r in 0..batch.rows {
        let t = net.forward(&batch.inputs[r * din..(r + 1) * din], Mode::Inference)?;
        total += loss_unchecked(kind, t.output(), &batch.targets[r * dout..(r + 1) * dout]);
        if activity_l2 > 0.0 {
            total += activity_l2 * dot(&t.outputs[0], &t.outputs[0]);
        }
    }
    Ok(total / batch.rows as f64)
}

fn check_batch(net: &Network, batch: Batch<'_>) -> Result<()> {
    if batch.rows == 0 {
        return Err(Error::Empty("batch".into()));
    }
    if batch.inputs.len() != batch.rows * net.input_dim() || batch.targets.len() != batch.rows * net.output_dim() {
        return Err(Error::Shape(format!(
            "batch of {} rows with {} inputs / {} targets for a {} -> {} network",
            batch.rows,
            batch.inputs.len(),
            batch.targets.len(),
            net.input_dim(),
            net.output_dim()
        )));
    }
    Ok(())
}

/// Exact gradients of [`objective`] with respect to every weight and bias.
///
/// With `dropout` set, each row is forwarded in training mode and gradients
/// flow through the sampled masks; without it the pass is deterministic.
/// Returns the batch objective alongside the gradients.
pub fn backprop(
    net: &Network,
    batch: Batch<'_>,
    kind: LossKind,
    activity_l2: f64,
    mut dropout: Option<&mut Rng>,
) -> Result<(f64, Gradients)> {
    check_batch(net, batch)?;
    let (din, dout) = (net.input_dim(), net.output_dim());
    let scale = 1.0 / batch.rows as f64;
    let mut grads = Gradients::zeros(net);
    let mut total = 0.0;
    let last = net.layers.len() - 1;
    let fused_bce = kind == LossKind::BinaryCrossEntropy
        && net.layers[last].activation == Activation::Sigmoid
        && !(last == 0 && activity_l2 > 0.0);

    for r in 0..batch.rows {
        let x = &batch.inputs[r * din..(r + 1) * din];
        let y = &batch.targets[r * dout..(r + 1) * dout];
        let mode = match dropout.as_deref_mut() {
            Some(rng) => Mode::Training(rng),
            None => Mode::Inference,
        };
        let t = net.forward(x, mode)?;
        total += loss_unchecked(kind, t.output(), y);
        if activity_l2 > 0.0 {
            total += activity_l2 * dot(&t.outputs[0], &t.outputs[0]);
        }

        // delta = d objective / d pre-activation of the current layer
        let mut upstream: Vec<f64>;
        let mut delta: Vec<f64> = Vec::new();
        if fused_bce && t.masks[last].is_none() {
            // sigmoid + cross-entropy: d/dz = (ŷ - y) / d, stable at saturation
            let d = dout as f64;
            delta = t.output().iter().zip(y).map(|(p, yy)| (p - yy) / d * scale).collect();
            upstream = Vec::new();
        } else {
            upstream = loss_gradient(kind, t.output(), y).into_iter().map(|g| g * scale).collect();
        }
        for l in (0..=last).rev() {
            let layer = &net.layers[l];
            if !(l == last && !delta.is_empty()) {
                // d/dh = mask ∘ d/da (+ activity term on the first layer)
                let mut dh = upstream.clone();
                if let Some(mask) = &t.masks[l] {
                    for (g, m) in dh.iter_mut().zip(mask) {
                        *g *= m;
                    }
                }
                if l == 0 && activity_l2 > 0.0 {
                    for (g, h) in dh.iter_mut().zip(&t.outputs[0]) {
                        *g += 2.0 * activity_l2 * h * scale;
                    }
                }
                delta = dh
                    .iter()
                    .zip(&t.pre_activations[l])
                    .zip(&t.outputs[l])
                    .map(|((g, &z), &h)| g * layer.activation.derivative(z, h))
                    .collect();
            }
            let input = &t.activations[l];
            let gw = &mut grads.weights[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                for (g, &a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            for (g, &d) in grads.biases[l].iter_mut().zip(&delta) {
                *g += d;
            }
            if l > 0 {
                upstream = vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    let w = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (u, &wi) in upstream.iter_mut().zip(w) {
                        *u += d * wi;
                    }
                }
            }
            delta.clear();
        }
    }
    Ok((total * scale, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            config,
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam state for {} parameters given {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(state: &AdamState, params: &[f64], grads: &[f64]) -> Result<(Vec<f64>, AdamState)> {
    let mut next = state.clone();
    let mut p = params.to_vec();
    next.step(&mut p, grads)?;
    Ok((p, next))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

/// Mini-batch Adam on a row-major input/target matrix; the row order is
/// reshuffled every epoch from `seed`. Returns the mean objective of each
/// epoch.
pub fn train_network(
    net: &mut Network,
    inputs: &[f64],
    targets: &[f64],
    rows: usize,
    kind: LossKind,
    activity_l2: f64,
    opts: TrainOptions,
) -> Result<Vec<f64>> {
    if opts.batch == 0 || opts.epochs == 0 {
        return Err(Error::InvalidParameter("epochs and batch size must be >= 1".into()));
    }
    check_batch(net, Batch { inputs, targets, rows })?;
    let (din, dout) = (net.input_dim(), net.output_dim());
    let mut rng = seeded(crate::rng::derive_seed(opts.seed, 1));
    let mut adam = AdamState::new(net.param_count(), AdamConfig { lr: opts.lr, ..Default::default() });
    let mut order: Vec<usize> = (0..rows).collect();
    let mut xb = Vec::with_capacity(opts.batch * din);
    let mut yb = Vec::with_capacity(opts.batch * dout);
    let mut history = Vec::with_capacity(opts.epochs);
    let mut params = net.params();
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for chunk in order.chunks(opts.batch) {
            xb.clear();
            yb.clear();
            for &i in chunk {
                xb.extend_from_slice(&inputs[i * din..(i + 1) * din]);
                yb.extend_from_slice(&targets[i * dout..(i + 1) * dout]);
            }
            let batch = Batch { inputs: &xb, targets: &yb, rows: chunk.len() };
            let (obj, grads) = backprop(net, batch, kind, activity_l2, Some(&mut rng))?;
            epoch_total += obj * chunk.len() as f64;
            adam.step(&mut params, &grads.flatten())?;
            net.set_params(&params)?;
        }
        history.push(epoch_total / rows as f64);
    }
    Ok(history)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfnArch {
    pub hidden: Vec<usize>,
    /// Dropout after each hidden layer (missing entries mean none).
    pub dropout: Vec<f64>,
    pub activation: Activation,
}

impl Default for FfnArch {
    fn default() -> Self {
        FfnArch {
            hidden: vec![22, 20, 15],
            dropout: vec![0.3, 0.2, 0.0],
            activation: Activation::Relu,
        }
    }
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 30,
            batch: 512,
            lr: 0.001,
            seed: 0,
        }
    }
}

/// Feed-forward binary classifier bound to its input feature names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FfnModel {
    pub features: Vec<String>,
    pub network: Network,
}

impl FfnModel {
    pub fn predict_proba(&self, ds: &Dataset) -> Result<Vec<f64>> {
        let k = self.features.len();
        let m = ds.aligned_matrix(&self.features)?;
        (0..ds.rows())
            .map(|i| self.network.predict(&m[i * k..(i + 1) * k]).map(|o| o[0]))
            .collect()
    }
}

/// Trains hidden layers plus a one-unit sigmoid head with cross-entropy and Adam.
pub fn train_ffn(train: &Dataset, label: &str, arch: &FfnArch, opts: TrainOptions) -> Result<FfnModel> {
    let y = train.label(label)?;
    if train.rows() == 0 || train.n_features() == 0 {
        return Err(Error::Empty("network training data".into()));
    }
    let mut sizes = vec![train.n_features()];
    sizes.extend(&arch.hidden);
    sizes.push(1);
    let mut activations = vec![arch.activation; arch.hidden.len()];
    activations.push(Activation::Sigmoid);
    let mut net = Network::new(&sizes, &activations, &arch.dropout, opts.seed)?;
    if net.dropout[net.layers.len() - 1] != 0.0 {
        return Err(Error::InvalidParameter("output layer cannot use dropout".into()));
    }
    let targets: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    train_network(
        &mut net,
        train.values(),
        &targets,
        train.rows(),
        LossKind::BinaryCrossEntropy,
        0.0,
        opts,
    )?;
    Ok(FfnModel {
        features: train.feature_names(),
        network: net,
    })
}
