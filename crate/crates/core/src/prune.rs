//! Differentiable structured pruning with binary gates.
//!
//! Each prunable layer carries one real gate parameter per row or column.
//! The mask is the step function of the gate (`> 0` keeps the structure),
//! the layer uses `W ⊙ M` in its forward pass, and the loss adds
//! `mu * (number of open gates)`. Gates receive the straight-through
//! gradient `dL/dM * softplus(gate)`; weights and gates have separate
//! optimizers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::ftol::Activation;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// One gate per input row.
    Row,
    /// One gate per output column.
    Column,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gates {
    pub params: Vec<f64>,
    pub axis: Axis,
}

/// Binary mask of a gate vector: 1 where the gate is strictly positive.
pub fn mask_of(gates: &[f64]) -> Vec<u8> {
    gates.iter().map(|&g| u8::from(g > 0.0)).collect()
}

pub fn softplus(x: f64) -> f64 {
    // ln(1 + e^x) without overflow for large x.
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Dense layer `y = act(H(W; M)^T x + b)` with `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub gates: Option<Gates>,
    pub activation: Activation,
}

impl GatedLayer {
    pub fn new(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::Dimension(format!(
                "{} biases for {} outputs",
                bias.len(),
                weight.cols()
            )));
        }
        Ok(Self {
            weight,
            bias,
            gates: None,
            activation,
        })
    }

    /// Attaches gates along `axis`, one per structure, all set to `init`.
    pub fn with_gates(mut self, axis: Axis, init: f64) -> Self {
        let n = match axis {
            Axis::Row => self.weight.rows(),
            Axis::Column => self.weight.cols(),
        };
        self.gates = Some(Gates {
            params: vec![init; n],
            axis,
        });
        self
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn mask(&self) -> Option<Vec<u8>> {
        self.gates.as_ref().map(|g| mask_of(&g.params))
    }

    /// Whether weight `(r, c)` belongs to an open structure.
    fn entry_open(mask: &Option<Vec<u8>>, axis: Option<Axis>, r: usize, c: usize) -> bool {
        match (mask, axis) {
            (Some(m), Some(Axis::Row)) => m[r] == 1,
            (Some(m), Some(Axis::Column)) => m[c] == 1,
            _ => true,
        }
    }

    /// `H(W; M)`: the weight with closed rows or columns zeroed.
    pub fn masked_weight(&self) -> Matrix {
        let mask = self.mask();
        let axis = self.gates.as_ref().map(|g| g.axis);
        let mut h = self.weight.clone();
        for r in 0..h.rows() {
            for c in 0..h.cols() {
                if !Self::entry_open(&mask, axis, r, c) {
                    h.set(r, c, 0.0);
                }
            }
        }
        h
    }

    pub fn open_gates(&self) -> usize {
        self.mask()
            .map_or(0, |m| m.iter().map(|&b| usize::from(b)).sum())
    }

    /// Indices of closed gates, ascending.
    pub fn closed(&self) -> Vec<usize> {
        self.mask().map_or_else(Vec::new, |m| {
            m.iter()
                .enumerate()
                .filter(|&(_, &b)| b == 0)
                .map(|(i, _)| i)
                .collect()
        })
    }

    pub fn sparsity(&self) -> f64 {
        match &self.gates {
            Some(g) if !g.params.is_empty() => self.closed().len() as f64 / g.params.len() as f64,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatedNetwork {
    pub layers: Vec<GatedLayer>,
}

impl GatedNetwork {
    pub fn new(layers: Vec<GatedLayer>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Dimension(format!(
                    "layer outputs {} feed {} inputs",
                    pair[0].out_dim(),
                    pair[1].in_dim()
                )));
            }
        }
        if layers.is_empty() {
            return Err(Error::Dimension("network has no layers".into()));
        }
        Ok(Self { layers })
    }

    /// He-initialised MLP with ReLU hidden layers and identity output.
    /// Hidden layers get column gates at `gate_init`; the output layer is
    /// left ungated so no class logit can be pruned away.
    pub fn mlp(sizes: &[usize], gate_init: f64, seed: u64) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config("need at least input and output sizes".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let scale = (2.0 / fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let weight = Matrix::from_vec(fan_in, fan_out, data)?;
                let act = if k == last {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                let layer = GatedLayer::new(weight, vec![0.0; fan_out], act)?;
                Ok(if k == last {
                    layer
                } else {
                    layer.with_gates(Axis::Column, gate_init)
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn open_gates(&self) -> usize {
        self.layers.iter().map(GatedLayer::open_gates).sum()
    }

    /// Closed fraction over all gated structures.
    pub fn sparsity(&self) -> f64 {
        let total: usize = self
            .layers
            .iter()
            .filter_map(|l| l.gates.as_ref().map(|g| g.params.len()))
            .sum();
        if total == 0 {
            return 0.0;
        }
        let closed: usize = self.layers.iter().map(|l| l.closed().len()).sum();
        closed as f64 / total as f64
    }
}

/// Per-layer activations of one forward pass.
struct Trace {
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

fn forward_with(hs: &[Matrix], net: &GatedNetwork, x: &[f64]) -> Result<Trace> {
    let mut inputs = Vec::with_capacity(hs.len());
    let mut pre = Vec::with_capacity(hs.len());
    let mut a = x.to_vec();
    for (h, layer) in hs.iter().zip(&net.layers) {
        let mut z = h.vec_mul(&a)?;
        for (zj, b) in z.iter_mut().zip(&layer.bias) {
            *zj += b;
        }
        let next = z.iter().map(|&v| layer.activation.apply(v)).collect();
        inputs.push(std::mem::replace(&mut a, next));
        pre.push(z);
    }
    Ok(Trace {
        inputs,
        pre,
        logits: a,
    })
}

fn masked_weights(net: &GatedNetwork) -> Vec<Matrix> {
    net.layers.iter().map(GatedLayer::masked_weight).collect()
}

/// Logits of the gated network.
pub fn forward_masked(net: &GatedNetwork, x: &[f64]) -> Result<Vec<f64>> {
    Ok(forward_with(&masked_weights(net), net, x)?.logits)
}

/// Stable `log(sum(exp(z)))`.
fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    log_sum_exp(logits) - logits[label]
}

fn task_loss_with(hs: &[Matrix], net: &GatedNetwork, batch: &Dataset) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Dimension("empty batch".into()));
    }
    let mut sum = 0.0;
    for (i, &label) in batch.y.iter().enumerate() {
        let t = forward_with(hs, net, batch.sample(i))?;
        sum += cross_entropy(&t.logits, label);
    }
    Ok(sum / batch.len() as f64)
}

/// Mean cross-entropy with the weights replaced by explicit `H` matrices.
/// Exposed for gradient oracles.
pub fn task_loss_given(hs: &[Matrix], net: &GatedNetwork, batch: &Dataset) -> Result<f64> {
    task_loss_with(hs, net, batch)
}

/// Mean cross-entropy plus `mu` times the number of open gates.
pub fn total_loss(net: &GatedNetwork, batch: &Dataset, mu: f64) -> Result<f64> {
    let task = task_loss_with(&masked_weights(net), net, batch)?;
    Ok(task + mu * net.open_gates() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// `dL/dH ⊙ M` per layer.
    pub weight: Vec<Matrix>,
    pub bias: Vec<Vec<f64>>,
    /// `dL/dM` per gated layer, penalty included.
    pub mask: Vec<Option<Vec<f64>>>,
    /// `dL/dM * softplus(gate)`.
    pub gate: Vec<Option<Vec<f64>>>,
    /// Mean task loss of the batch.
    pub task_loss: f64,
}

/// Gradients of `total_loss` for one batch.
pub fn backward(net: &GatedNetwork, batch: &Dataset, mu: f64) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::Dimension("empty batch".into()));
    }
    let hs = masked_weights(net);
    let scale = 1.0 / batch.len() as f64;
    let mut d_h: Vec<Matrix> = net
        .layers
        .iter()
        .map(|l| Matrix::zeros(l.in_dim(), l.out_dim()))
        .collect();
    let mut d_b: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.out_dim()]).collect();
    let mut loss = 0.0;

    for (s, &label) in batch.y.iter().enumerate() {
        let t = forward_with(&hs, net, batch.sample(s))?;
        loss += cross_entropy(&t.logits, label);
        // Softmax minus one-hot, averaged over the batch.
        let lse = log_sum_exp(&t.logits);
        let mut delta: Vec<f64> = t
            .logits
            .iter()
            .enumerate()
            .map(|(j, &z)| scale * ((z - lse).exp() - f64::from(u8::from(j == label))))
            .collect();
        for k in (0..net.layers.len()).rev() {
            let layer = &net.layers[k];
            if layer.activation == Activation::Relu {
                for (d, &z) in delta.iter_mut().zip(&t.pre[k]) {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &t.inputs[k];
            for (i, &a) in input.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (g, &d) in d_h[k].as_mut_slice()[i * layer.out_dim()..(i + 1) * layer.out_dim()]
                    .iter_mut()
                    .zip(&delta)
                {
                    *g += a * d;
                }
            }
            for (g, &d) in d_b[k].iter_mut().zip(&delta) {
                *g += d;
            }
            if k > 0 {
                delta = (0..layer.in_dim())
                    .map(|i| hs[k].row(i).iter().zip(&delta).map(|(w, d)| w * d).sum())
                    .collect();
            }
        }
    }

    let mut weight = Vec::with_capacity(net.layers.len());
    let mut mask_grads = Vec::with_capacity(net.layers.len());
    let mut gate_grads = Vec::with_capacity(net.layers.len());
    for (layer, dh) in net.layers.iter().zip(d_h) {
        let (w_grad, m_grad) = contract(layer, &dh, mu);
        weight.push(w_grad);
        gate_grads.push(match (&layer.gates, &m_grad) {
            (Some(g), Some(m)) => Some(
                m.iter()
                    .zip(&g.params)
                    .map(|(dm, &p)| dm * softplus(p))
                    .collect(),
            ),
            _ => None,
        });
        mask_grads.push(m_grad);
    }
    Ok(Gradients {
        weight,
        bias: d_b,
        mask: mask_grads,
        gate: gate_grads,
        task_loss: loss * scale,
    })
}

/// Splits `dL/dH` into the masked weight gradient and, for gated layers,
/// `dL/dM[i] = sum over structure i of dL/dH * W, plus mu`.
fn contract(layer: &GatedLayer, dh: &Matrix, mu: f64) -> (Matrix, Option<Vec<f64>>) {
    let Some(gates) = &layer.gates else {
        return (dh.clone(), None);
    };
    let mask = mask_of(&gates.params);
    let mut w_grad = dh.clone();
    let mut m_grad = vec![mu; gates.params.len()];
    for r in 0..dh.rows() {
        for c in 0..dh.cols() {
            let idx = match gates.axis {
                Axis::Row => r,
                Axis::Column => c,
            };
            m_grad[idx] += dh.get(r, c) * layer.weight.get(r, c);
            if mask[idx] == 0 {
                w_grad.set(r, c, 0.0);
            }
        }
    }
    (w_grad, Some(m_grad))
}

/// Momentum buffers of the weight optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub momentum: f64,
    weight: Vec<Matrix>,
    bias: Vec<Vec<f64>>,
}

impl MomentumState {
    pub fn new(net: &GatedNetwork, momentum: f64) -> Self {
        Self {
            momentum,
            weight: net
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.in_dim(), l.out_dim()))
                .collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.out_dim()]).collect(),
        }
    }
}

/// Heavy-ball step `v = m*v + g; W -= lr*v`. Entries of closed structures
/// are left untouched, velocity included.
pub fn step_weights(net: &mut GatedNetwork, grads: &Gradients, lr: f64, state: &mut MomentumState) {
    let m = state.momentum;
    for (k, layer) in net.layers.iter_mut().enumerate() {
        let mask = layer.mask();
        let axis = layer.gates.as_ref().map(|g| g.axis);
        let (rows, cols) = layer.weight.dims();
        for r in 0..rows {
            for c in 0..cols {
                if !GatedLayer::entry_open(&mask, axis, r, c) {
                    continue;
                }
                let v = state.weight[k].get_mut(r, c);
                *v = m * *v + grads.weight[k].get(r, c);
                *layer.weight.get_mut(r, c) -= lr * *v;
            }
        }
        for ((b, v), g) in layer
            .bias
            .iter_mut()
            .zip(&mut state.bias[k])
            .zip(&grads.bias[k])
        {
            *v = m * *v + g;
            *b -= lr * *v;
        }
    }
}

/// Plain gradient descent on the gate parameters.
pub fn step_gates(net: &mut GatedNetwork, grads: &Gradients, lr: f64) {
    for (layer, g) in net.layers.iter_mut().zip(&grads.gate) {
        if let (Some(gates), Some(g)) = (&mut layer.gates, g) {
            for (p, d) in gates.params.iter_mut().zip(g) {
                *p -= lr * d;
            }
        }
    }
}

/// Fraction of samples whose arg-max logit matches the label.
pub fn accuracy(net: &GatedNetwork, data: &Dataset) -> Result<f64> {
    accuracy_of(data, |x| forward_masked(net, x))
}

pub(crate) fn accuracy_of(
    data: &Dataset,
    mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Dimension("empty dataset".into()));
    }
    let mut correct = 0usize;
    for (i, &label) in data.y.iter().enumerate() {
        if argmax(&f(data.sample(i))?) == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneConfig {
    pub hidden: Vec<usize>,
    pub mu: f64,
    pub gate_lr: f64,
    pub weight_lr: f64,
    pub momentum: f64,
    pub gate_init: f64,
    pub batch_size: usize,
    pub epochs_joint: usize,
    pub epochs_finetune: usize,
    pub seed: u64,
    pub min_sparsity: f64,
    /// Largest tolerated drop in test accuracy, in percentage points.
    pub max_accuracy_drop: f64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            mu: 1.5e-3,
            gate_lr: 0.5,
            weight_lr: 0.02,
            momentum: 0.9,
            gate_init: 1.0,
            batch_size: 32,
            epochs_joint: 30,
            epochs_finetune: 10,
            seed: 1,
            min_sparsity: 0.30,
            max_accuracy_drop: 1.0,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mu.is_nan() || self.mu < 0.0 {
            return Err(Error::Config(format!("mu must be >= 0, got {}", self.mu)));
        }
        if !(self.gate_lr > 0.0 && self.weight_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneReport {
    /// Closed-gate fraction per layer (0 for ungated layers).
    pub sparsity: Vec<f64>,
    /// Closed over all gated structures.
    pub overall_sparsity: f64,
    pub pruned: Vec<Vec<usize>>,
    pub baseline_accuracy: f64,
    pub pruned_accuracy: f64,
    /// Mean total loss per epoch, both phases.
    pub loss_trace: Vec<f64>,
}

impl PruneReport {
    /// Baseline minus pruned accuracy, in percentage points.
    pub fn accuracy_drop(&self) -> f64 {
        100.0 * (self.baseline_accuracy - self.pruned_accuracy)
    }

    pub fn meets_targets(&self, cfg: &PruneConfig) -> bool {
        self.overall_sparsity >= cfg.min_sparsity && self.accuracy_drop() <= cfg.max_accuracy_drop
    }
}

/// Runs the training schedule. `mu` and gate updates apply only when
/// `prune` is set; otherwise gates stay at their initial (open) values.
fn train(cfg: &PruneConfig, data: &Split, prune: bool) -> Result<(GatedNetwork, Vec<f64>)> {
    let mut sizes = vec![data.train.dim()];
    sizes.extend(&cfg.hidden);
    sizes.push(
        data.train
            .y
            .iter()
            .max()
            .map_or(0, |m| m + 1)
            .max(data.test.y.iter().max().map_or(0, |m| m + 1)),
    );
    let mut net = GatedNetwork::mlp(&sizes, cfg.gate_init, cfg.seed)?;
    let mut state = MomentumState::new(&net, cfg.momentum);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ba7c);
    let mut trace = Vec::with_capacity(cfg.epochs_joint + cfg.epochs_finetune);
    let mu = if prune { cfg.mu } else { 0.0 };

    for epoch in 0..cfg.epochs_joint + cfg.epochs_finetune {
        let joint = epoch < cfg.epochs_joint;
        let mut sum = 0.0;
        let batches = data.train.batches(cfg.batch_size, &mut rng);
        for (step, idx) in batches.iter().enumerate() {
            let batch = data.train.select(idx);
            let penalty = if joint { mu } else { 0.0 };
            let grads = backward(&net, &batch, penalty)?;
            let loss = grads.task_loss + penalty * net.open_gates() as f64;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    step,
                    value: loss,
                });
            }
            sum += loss;
            step_weights(&mut net, &grads, cfg.weight_lr, &mut state);
            if joint && prune {
                step_gates(&mut net, &grads, cfg.gate_lr);
            }
        }
        trace.push(sum / batches.len() as f64);
    }
    Ok((net, trace))
}

/// Jointly trains weights and gates, then fine-tunes the weights with the
/// masks frozen. The baseline is the same schedule and seed with the gates
/// held open.
pub fn train_prune(cfg: &PruneConfig, data: &Split) -> Result<(GatedNetwork, PruneReport)> {
    cfg.validate()?;
    let (baseline, _) = train(cfg, data, false)?;
    let (net, loss_trace) = train(cfg, data, true)?;
    let report = PruneReport {
        sparsity: net.layers.iter().map(GatedLayer::sparsity).collect(),
        overall_sparsity: net.sparsity(),
        pruned: net.layers.iter().map(GatedLayer::closed).collect(),
        baseline_accuracy: accuracy(&baseline, &data.test)?,
        pruned_accuracy: accuracy(&net, &data.test)?,
        loss_trace,
    };
    Ok((net, report))
}

/// Plain dense layer of a hard-pruned network.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
    /// Positions in the previous layer's output (or the network input)
    /// that feed this layer's rows.
    pub input_select: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardPruned {
    pub layers: Vec<DenseLayer>,
    pub pruned: Vec<Vec<usize>>,
    pub sparsity: Vec<f64>,
}

impl HardPruned {
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut a = x.to_vec();
        for l in &self.layers {
            let input: Vec<f64> = l.input_select.iter().map(|&i| a[i]).collect();
            let mut z = l.weight.vec_mul(&input)?;
            for (zj, b) in z.iter_mut().zip(&l.bias) {
                *zj += b;
            }
            a = z.into_iter().map(|v| l.activation.apply(v)).collect();
        }
        Ok(a)
    }
}

/// Removes closed structures. A closed column still emits `act(bias)`,
/// which is folded into the next layer's bias.
pub fn hard_prune(net: &GatedNetwork) -> HardPruned {
    let n = net.layers.len();
    let keep_cols: Vec<Vec<usize>> = net
        .layers
        .iter()
        .map(|l| match &l.gates {
            Some(g) if g.axis == Axis::Column => open_indices(&g.params),
            _ => (0..l.out_dim()).collect(),
        })
        .collect();
    let mut layers = Vec::with_capacity(n);
    for (k, l) in net.layers.iter().enumerate() {
        let h = l.masked_weight();
        let rows_open: Vec<usize> = match &l.gates {
            Some(g) if g.axis == Axis::Row => open_indices(&g.params),
            _ => (0..l.in_dim()).collect(),
        };
        let mut bias: Vec<f64> = keep_cols[k].iter().map(|&c| l.bias[c]).collect();
        let rows: Vec<usize> = if k == 0 {
            rows_open
        } else {
            let prev = &net.layers[k - 1];
            let kept = &keep_cols[k - 1];
            for j in (0..prev.out_dim()).filter(|j| !kept.contains(j)) {
                let constant = prev.activation.apply(prev.bias[j]);
                for (b, &c) in bias.iter_mut().zip(&keep_cols[k]) {
                    *b += constant * h.get(j, c);
                }
            }
            rows_open.into_iter().filter(|r| kept.contains(r)).collect()
        };
        let input_select = if k == 0 {
            rows.clone()
        } else {
            let kept = &keep_cols[k - 1];
            rows.iter()
                .map(|r| kept.iter().position(|c| c == r).expect("kept row"))
                .collect()
        };
        let data = rows
            .iter()
            .flat_map(|&r| keep_cols[k].iter().map(move |&c| (r, c)))
            .map(|(r, c)| h.get(r, c))
            .collect();
        layers.push(DenseLayer {
            weight: Matrix::from_vec(rows.len(), keep_cols[k].len(), data).expect("sub-matrix"),
            bias,
            activation: l.activation,
            input_select,
        });
    }
    HardPruned {
        layers,
        pruned: net.layers.iter().map(GatedLayer::closed).collect(),
        sparsity: net.layers.iter().map(GatedLayer::sparsity).collect(),
    }
}

fn open_indices(params: &[f64]) -> Vec<usize> {
    mask_of(params)
        .iter()
        .enumerate()
        .filter(|&(_, &b)| b == 1)
        .map(|(i, _)| i)
        .collect()
}
