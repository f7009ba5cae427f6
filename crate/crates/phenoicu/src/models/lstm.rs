//! Single-layer LSTM sequence classifier trained with Adam on per-timestep
//! cross-entropy, with an exact backward pass verified against central finite
//! differences.
//!
//! Gate blocks are stacked in the order input, forget, cell candidate,
//! output; the forget-gate bias starts at one.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::seeds::stream_rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmConfig {
    pub hidden_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub n_layers: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    /// Early-stopping patience; engages only when a validation set is given.
    pub patience: Option<usize>,
    /// Weight each labeled timestep by inverse class frequency. Off by
    /// default: no reweighting is applied unless asked for.
    pub balance_classes: bool,
    pub seed: u64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig {
            hidden_size: 128,
            epochs: 30,
            batch_size: 8,
            n_layers: 1,
            learning_rate: 1e-4,
            weight_decay: 0.0,
            dropout: 0.0,
            patience: Some(10),
            balance_classes: false,
            seed: 0,
        }
    }
}

/// Parameter bundle. `n_outputs == 1` means a sigmoid binary head; larger
/// values mean a softmax head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input_size: usize,
    pub hidden_size: usize,
    pub n_outputs: usize,
    /// `4H x D`, gate-stacked rows.
    pub w_x: Vec<f64>,
    /// `4H x H`.
    pub w_h: Vec<f64>,
    /// `4H`.
    pub b: Vec<f64>,
    /// `n_outputs x H`.
    pub w_out: Vec<f64>,
    /// `n_outputs`.
    pub b_out: Vec<f64>,
}

/// One training sequence: a row-major `T x D` input block plus an optional
/// label per timestep.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub inputs: Vec<f64>,
    pub labels: Vec<Option<u8>>,
}

impl Sequence {
    pub fn len(&self, input_size: usize) -> usize {
        self.inputs.len().checked_div(input_size).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

impl LstmParams {
    pub fn init(input_size: usize, hidden_size: usize, n_outputs: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, "lstm-init", 0);
        let mut uniform = |n: usize| -> Vec<f64> {
            (0..n).map(|_| (rng.random::<f64>() - 0.5) * 0.16).collect()
        };
        let h4 = 4 * hidden_size;
        let mut b = vec![0.0; h4];
        for v in &mut b[hidden_size..2 * hidden_size] {
            *v = 1.0; // forget-gate bias
        }
        LstmParams {
            input_size,
            hidden_size,
            n_outputs,
            w_x: uniform(h4 * input_size),
            w_h: uniform(h4 * hidden_size),
            b,
            w_out: uniform(n_outputs * hidden_size),
            b_out: vec![0.0; n_outputs],
        }
    }

    fn tensors(&self) -> [(&'static str, &Vec<f64>); 5] {
        [
            ("w_x", &self.w_x),
            ("w_h", &self.w_h),
            ("b", &self.b),
            ("w_out", &self.w_out),
            ("b_out", &self.b_out),
        ]
    }

    fn tensors_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 5] {
        [
            ("w_x", &mut self.w_x),
            ("w_h", &mut self.w_h),
            ("b", &mut self.b),
            ("w_out", &mut self.w_out),
            ("b_out", &mut self.b_out),
        ]
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone)]
struct Grads {
    w_x: Vec<f64>,
    w_h: Vec<f64>,
    b: Vec<f64>,
    w_out: Vec<f64>,
    b_out: Vec<f64>,
}

impl Grads {
    fn zeros(p: &LstmParams) -> Self {
        Grads {
            w_x: vec![0.0; p.w_x.len()],
            w_h: vec![0.0; p.w_h.len()],
            b: vec![0.0; p.b.len()],
            w_out: vec![0.0; p.w_out.len()],
            b_out: vec![0.0; p.b_out.len()],
        }
    }

    fn tensors_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [
            &mut self.w_x,
            &mut self.w_h,
            &mut self.b,
            &mut self.w_out,
            &mut self.b_out,
        ]
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// out += W x, with W row-major `out.len() x x.len()`.
fn matvec_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        *o += acc;
    }
}

/// dx += W^T dy.
fn matvec_t_acc(w: &[f64], dy: &[f64], dx: &mut [f64]) {
    let cols = dx.len();
    for (r, d) in dy.iter().enumerate() {
        if *d == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (x, a) in dx.iter_mut().zip(row) {
            *x += a * d;
        }
    }
}

/// dW += dy x^T.
fn outer_acc(dw: &mut [f64], dy: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, d) in dy.iter().enumerate() {
        if *d == 0.0 {
            continue;
        }
        let row = &mut dw[r * cols..(r + 1) * cols];
        for (slot, v) in row.iter_mut().zip(x) {
            *slot += d * v;
        }
    }
}

struct StepCache {
    gates: Vec<f64>, // 4H post-activation
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

fn forward_sequence(p: &LstmParams, inputs: &[f64]) -> Vec<StepCache> {
    let h_size = p.hidden_size;
    let h4 = 4 * h_size;
    let t_len = inputs.len() / p.input_size;
    let mut caches = Vec::with_capacity(t_len);
    let mut h_prev = vec![0.0; h_size];
    let mut c_prev = vec![0.0; h_size];
    for t in 0..t_len {
        let x = &inputs[t * p.input_size..(t + 1) * p.input_size];
        let mut z = p.b.clone();
        matvec_acc(&p.w_x, x, &mut z);
        matvec_acc(&p.w_h, &h_prev, &mut z);
        let mut gates = vec![0.0; h4];
        for j in 0..h_size {
            gates[j] = sigmoid(z[j]); // input
            gates[h_size + j] = sigmoid(z[h_size + j]); // forget
            gates[2 * h_size + j] = z[2 * h_size + j].tanh(); // candidate
            gates[3 * h_size + j] = sigmoid(z[3 * h_size + j]); // output
        }
        let mut c = vec![0.0; h_size];
        let mut tanh_c = vec![0.0; h_size];
        let mut h = vec![0.0; h_size];
        for j in 0..h_size {
            c[j] = gates[h_size + j] * c_prev[j] + gates[j] * gates[2 * h_size + j];
            tanh_c[j] = c[j].tanh();
            h[j] = gates[3 * h_size + j] * tanh_c[j];
        }
        h_prev.copy_from_slice(&h);
        c_prev.copy_from_slice(&c);
        caches.push(StepCache {
            gates,
            c,
            tanh_c,
            h,
        });
    }
    caches
}

fn output_logits(p: &LstmParams, h: &[f64]) -> Vec<f64> {
    let mut y = p.b_out.clone();
    matvec_acc(&p.w_out, h, &mut y);
    y
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Loss and output-gradient at one labeled timestep, before normalization.
fn loss_and_dy(p: &LstmParams, logits: &[f64], label: u8, weight: f64) -> (f64, Vec<f64>) {
    if p.n_outputs == 1 {
        let y = logits[0];
        let t = f64::from(label);
        let loss = y.max(0.0) - y * t + (-y.abs()).exp().ln_1p();
        (weight * loss, vec![weight * (sigmoid(y) - t)])
    } else {
        let probs = softmax(logits);
        let loss = -probs[label as usize].max(1e-300).ln();
        let mut dy = probs;
        dy[label as usize] -= 1.0;
        for d in &mut dy {
            *d *= weight;
        }
        (weight * loss, dy)
    }
}

fn label_weight(weights: Option<&[f64]>, label: u8) -> f64 {
    weights.map_or(1.0, |w| w[label as usize])
}

fn count_labeled(batch: &[Sequence]) -> usize {
    batch
        .iter()
        .flat_map(|s| s.labels.iter())
        .filter(|l| l.is_some())
        .count()
}

/// Mean cross-entropy over every labeled timestep in the batch.
pub fn batch_loss(p: &LstmParams, batch: &[Sequence]) -> f64 {
    batch_loss_weighted(p, batch, None)
}

fn batch_loss_weighted(p: &LstmParams, batch: &[Sequence], weights: Option<&[f64]>) -> f64 {
    let n = count_labeled(batch);
    if n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for seq in batch {
        let caches = forward_sequence(p, &seq.inputs);
        for (t, label) in seq.labels.iter().enumerate() {
            if let Some(l) = label {
                let logits = output_logits(p, &caches[t].h);
                total += loss_and_dy(p, &logits, *l, label_weight(weights, *l)).0;
            }
        }
    }
    total / n as f64
}

fn forward_backward(p: &LstmParams, batch: &[Sequence], weights: Option<&[f64]>) -> (f64, Grads) {
    let n_labeled = count_labeled(batch);
    let mut grads = Grads::zeros(p);
    if n_labeled == 0 {
        return (0.0, grads);
    }
    let scale = 1.0 / n_labeled as f64;
    let h_size = p.hidden_size;
    let mut total_loss = 0.0;

    for seq in batch {
        let t_len = seq.len(p.input_size);
        if t_len == 0 {
            continue;
        }
        let caches = forward_sequence(p, &seq.inputs);
        let mut dh_next = vec![0.0; h_size];
        let mut dc_next = vec![0.0; h_size];
        for t in (0..t_len).rev() {
            let cache = &caches[t];
            let mut dh = dh_next.clone();
            if let Some(label) = seq.labels[t] {
                let logits = output_logits(p, &cache.h);
                let (loss, mut dy) =
                    loss_and_dy(p, &logits, label, label_weight(weights, label));
                total_loss += loss * scale;
                for d in &mut dy {
                    *d *= scale;
                }
                outer_acc(&mut grads.w_out, &dy, &cache.h);
                for (g, d) in grads.b_out.iter_mut().zip(&dy) {
                    *g += d;
                }
                matvec_t_acc(&p.w_out, &dy, &mut dh);
            }
            let c_prev_vec;
            let c_prev: &[f64] = if t == 0 {
                c_prev_vec = vec![0.0; h_size];
                &c_prev_vec
            } else {
                &caches[t - 1].c
            };
            let h_prev_vec;
            let h_prev: &[f64] = if t == 0 {
                h_prev_vec = vec![0.0; h_size];
                &h_prev_vec
            } else {
                &caches[t - 1].h
            };

            let mut dz = vec![0.0; 4 * h_size];
            let mut dc_prev = vec![0.0; h_size];
            for j in 0..h_size {
                let i_g = cache.gates[j];
                let f_g = cache.gates[h_size + j];
                let g_g = cache.gates[2 * h_size + j];
                let o_g = cache.gates[3 * h_size + j];
                let dc = dh[j] * o_g * (1.0 - cache.tanh_c[j] * cache.tanh_c[j]) + dc_next[j];
                dz[j] = dc * g_g * i_g * (1.0 - i_g);
                dz[h_size + j] = dc * c_prev[j] * f_g * (1.0 - f_g);
                dz[2 * h_size + j] = dc * i_g * (1.0 - g_g * g_g);
                dz[3 * h_size + j] = dh[j] * cache.tanh_c[j] * o_g * (1.0 - o_g);
                dc_prev[j] = dc * f_g;
            }
            let x = &seq.inputs[t * p.input_size..(t + 1) * p.input_size];
            outer_acc(&mut grads.w_x, &dz, x);
            outer_acc(&mut grads.w_h, &dz, h_prev);
            for (g, d) in grads.b.iter_mut().zip(&dz) {
                *g += d;
            }
            let mut dh_prev = vec![0.0; h_size];
            matvec_t_acc(&p.w_h, &dz, &mut dh_prev);
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
    }
    (total_loss, grads)
}

struct Adam {
    m: Grads,
    v: Grads,
    step: usize,
}

impl Adam {
    fn new(p: &LstmParams) -> Self {
        Adam {
            m: Grads::zeros(p),
            v: Grads::zeros(p),
            step: 0,
        }
    }

    fn update(&mut self, p: &mut LstmParams, grads: &mut Grads, lr: f64, weight_decay: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.step += 1;
        let bc1 = 1.0 - B1.powi(self.step as i32);
        let bc2 = 1.0 - B2.powi(self.step as i32);
        let params = p.tensors_mut();
        let g_tensors = grads.tensors_mut();
        let m_tensors = self.m.tensors_mut();
        let v_tensors = self.v.tensors_mut();
        for (((param, grad), m), v) in params
            .into_iter()
            .zip(g_tensors)
            .zip(m_tensors)
            .zip(v_tensors)
        {
            let (_, param) = param;
            for k in 0..param.len() {
                let g = grad[k] + weight_decay * param[k];
                m[k] = B1 * m[k] + (1.0 - B1) * g;
                v[k] = B2 * v[k] + (1.0 - B2) * g * g;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                param[k] -= lr * m_hat / (v_hat.sqrt() + EPS);
            }
        }
    }
}

/// Training record: final parameters and the per-epoch mean loss curve.
pub struct TrainedLstm {
    pub params: LstmParams,
    pub loss_curve: Vec<f64>,
    pub stopped_early_at: Option<usize>,
}

/// Train with the configured schedule. Sequence order is shuffled each epoch
/// with a seeded stream; a validation set enables early stopping.
pub fn train_lstm(
    sequences: &[Sequence],
    input_size: usize,
    n_outputs: usize,
    cfg: &LstmConfig,
    validation: Option<&[Sequence]>,
) -> Result<TrainedLstm, ModelError> {
    if sequences.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let mut params = LstmParams::init(input_size, cfg.hidden_size, n_outputs, cfg.seed);
    let class_weights = cfg.balance_classes.then(|| {
        let n_classes = n_outputs.max(2);
        let mut counts = vec![0usize; n_classes];
        for seq in sequences {
            for label in seq.labels.iter().flatten() {
                counts[*label as usize] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        counts
            .iter()
            .map(|c| {
                if *c == 0 {
                    0.0
                } else {
                    total as f64 / (n_classes as f64 * *c as f64)
                }
            })
            .collect::<Vec<f64>>()
    });
    let mut adam = Adam::new(&params);
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, LstmParams, usize)> = None;
    let mut stopped_early_at = None;

    for epoch in 0..cfg.epochs {
        let mut rng = stream_rng(cfg.seed, "lstm-epoch", epoch as u64);
        // Fisher-Yates with the epoch stream
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<Sequence> = chunk.iter().map(|i| sequences[*i].clone()).collect();
            let (loss, mut grads) = forward_backward(&params, &batch, class_weights.as_deref());
            if !loss.is_finite() {
                return Err(ModelError::NanLoss { epoch });
            }
            adam.update(&mut params, &mut grads, cfg.learning_rate, cfg.weight_decay);
            epoch_loss += loss;
            batches += 1;
        }
        loss_curve.push(epoch_loss / batches.max(1) as f64);
        if !params.all_finite() {
            return Err(ModelError::NanLoss { epoch });
        }

        if let (Some(patience), Some(val)) = (cfg.patience, validation) {
            let val_loss = batch_loss_weighted(&params, val, class_weights.as_deref());
            let improved = best.as_ref().is_none_or(|(b, _, _)| val_loss < *b);
            if improved {
                best = Some((val_loss, params.clone(), epoch));
            } else if let Some((_, _, best_epoch)) = &best {
                if epoch - best_epoch >= patience {
                    stopped_early_at = Some(epoch);
                    break;
                }
            }
        }
    }
    if let Some((_, best_params, _)) = best {
        params = best_params;
    }
    Ok(TrainedLstm {
        params,
        loss_curve,
        stopped_early_at,
    })
}

/// Per-timestep class probabilities for one sequence.
pub fn predict_sequence(p: &LstmParams, inputs: &[f64]) -> Vec<Vec<f64>> {
    let caches = forward_sequence(p, inputs);
    caches
        .iter()
        .map(|c| {
            let logits = output_logits(p, &c.h);
            if p.n_outputs == 1 {
                let pos = sigmoid(logits[0]);
                vec![1.0 - pos, pos]
            } else {
                softmax(&logits)
            }
        })
        .collect()
}

/// Hidden-state trace (used by the boundedness property test).
pub fn hidden_trace(p: &LstmParams, inputs: &[f64]) -> Vec<Vec<f64>> {
    forward_sequence(p, inputs)
        .into_iter()
        .map(|c| c.h)
        .collect()
}

fn max_rel_err(analytic: &Grads, p: &LstmParams, batch: &[Sequence], epsilon: f64) -> f64 {
    let mut probe = p.clone();
    let mut worst = 0.0f64;
    for tensor_idx in 0..5 {
        let len = probe.tensors()[tensor_idx].1.len();
        for k in 0..len {
            let original = probe.tensors()[tensor_idx].1[k];
            probe.tensors_mut()[tensor_idx].1[k] = original + epsilon;
            let plus = batch_loss(&probe, batch);
            probe.tensors_mut()[tensor_idx].1[k] = original - epsilon;
            let minus = batch_loss(&probe, batch);
            probe.tensors_mut()[tensor_idx].1[k] = original;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = match tensor_idx {
                0 => analytic.w_x[k],
                1 => analytic.w_h[k],
                2 => analytic.b[k],
                3 => analytic.w_out[k],
                _ => analytic.b_out[k],
            };
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    worst
}

/// Maximum relative error between the analytic gradient and central finite
/// differences across every parameter tensor. Empty batches return 0. The
/// denominator is floored at 1e-6 so difference noise on near-zero gradients
/// does not register.
pub fn gradient_check(p: &LstmParams, batch: &[Sequence], epsilon: f64) -> f64 {
    if count_labeled(batch) == 0 {
        return 0.0;
    }
    let (_, grads) = forward_backward(p, batch, None);
    max_rel_err(&grads, p, batch, epsilon)
}

/// Negative control for the check harness: the forget-gate input gradients
/// are deliberately corrupted before the comparison, so a healthy
/// implementation reports a large error here.
pub fn gradient_check_corrupted(p: &LstmParams, batch: &[Sequence], epsilon: f64) -> f64 {
    if count_labeled(batch) == 0 {
        return 0.0;
    }
    let (_, mut grads) = forward_backward(p, batch, None);
    let h = p.hidden_size;
    for row in h..2 * h {
        for col in 0..p.input_size {
            grads.w_x[row * p.input_size + col] *= 1.5;
            grads.w_x[row * p.input_size + col] += 0.05;
        }
    }
    max_rel_err(&grads, p, batch, epsilon)
}
