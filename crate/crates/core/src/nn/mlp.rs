//! Forward evaluation, softmax cross-entropy, reverse-mode gradients and
//! exact Hessian-vector products for [`MlpParameters`].
//!
//! Hidden layers apply the architecture's activation; the last layer is
//! linear and its outputs are logits. The loss is the batch-mean categorical
//! negative log-likelihood with the class probability floored at
//! [`PROB_FLOOR`]. Rows whose true-class probability sits below the floor
//! contribute a constant to the loss and therefore nothing to its
//! derivatives.
//!
//! Hessian-vector products use the R-operator (forward-mode
//! differentiation of the backward pass), so `H·v` costs about two
//! gradient evaluations and is exact up to rounding.

use super::{LabeledBatch, MlpParameters};
use crate::{Error, Result};

/// Lower bound applied to probabilities inside the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Network outputs for a batch, row-major `(rows, classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    n_classes: usize,
    values: Vec<f64>,
}

impl Logits {
    pub fn new(n_classes: usize, values: Vec<f64>) -> Result<Self> {
        if n_classes == 0 || values.len() % n_classes != 0 {
            return Err(Error::Shape(format!(
                "{} logit values do not form rows of width {n_classes}",
                values.len()
            )));
        }
        Ok(Self { n_classes, values })
    }

    pub fn n_rows(&self) -> usize {
        self.values.len() / self.n_classes
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_classes..(i + 1) * self.n_classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.n_classes)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Row-wise softmax.
    pub fn softmax(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.values.len()];
        for (row, dst) in self.rows().zip(out.chunks_exact_mut(self.n_classes)) {
            softmax_into(row, dst);
        }
        out
    }

    /// Index of the largest logit per row; ties go to the lowest index.
    pub fn argmax(&self) -> Vec<usize> {
        self.rows()
            .map(|row| {
                let mut best = 0;
                for (c, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln()
}

fn softmax_into(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &z) in out.iter_mut().zip(row) {
        *o = (z - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// `-ln max(p_y, PROB_FLOOR)` for one row, plus whether the floor was hit.
fn row_nll(row: &[f64], label: usize) -> (f64, bool) {
    let nll = log_sum_exp(row) - row[label];
    let cap = -PROB_FLOOR.ln();
    if nll > cap {
        (cap, true)
    } else {
        (nll, false)
    }
}

fn check_labels(labels: &[usize], n_classes: usize) -> Result<()> {
    match labels.iter().position(|&y| y >= n_classes) {
        Some(i) => Err(Error::Argument(format!(
            "label {} at row {i} is out of range for {n_classes} classes",
            labels[i]
        ))),
        None => Ok(()),
    }
}

/// Mean categorical negative log-likelihood of `labels` under `logits`.
pub fn cross_entropy(logits: &Logits, labels: &[usize]) -> Result<f64> {
    if labels.len() != logits.n_rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.n_rows()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Argument("cross-entropy of an empty batch".into()));
    }
    check_labels(labels, logits.n_classes())?;
    let total: f64 = logits
        .rows()
        .zip(labels)
        .map(|(row, &y)| row_nll(row, y).0)
        .sum();
    Ok(total / labels.len() as f64)
}

fn check_batch(params: &MlpParameters, batch: &LabeledBatch) -> Result<()> {
    let arch = params.architecture();
    if batch.input_dim() != arch.input_dim() {
        return Err(Error::Shape(format!(
            "batch feature width {} does not match network input_dim {}",
            batch.input_dim(),
            arch.input_dim()
        )));
    }
    Ok(())
}

/// Per-layer pre-activations and hidden activations of one forward pass.
struct Trace<'a> {
    input: &'a [f64],
    /// `pre[l]` is `(rows, out_dim_l)`; the last entry holds the logits.
    pre: Vec<Vec<f64>>,
    /// `act[l] = activation(pre[l])` for hidden layers only.
    act: Vec<Vec<f64>>,
}

impl<'a> Trace<'a> {
    fn layer_input(&self, l: usize) -> &[f64] {
        if l == 0 {
            self.input
        } else {
            &self.act[l - 1]
        }
    }

    fn logits(&self) -> &[f64] {
        self.pre.last().expect("network has at least one layer")
    }
}

/// `out[i, o] = bias[o] + sum_k weights[o, k] * input[i, k]`
fn affine(input: &[f64], rows: usize, weights: &[f64], bias: &[f64], in_dim: usize) -> Vec<f64> {
    let out_dim = bias.len();
    let mut out = Vec::with_capacity(rows * out_dim);
    for x in input.chunks_exact(in_dim).take(rows) {
        for (w_row, &b) in weights.chunks_exact(in_dim).zip(bias) {
            out.push(b + dot(w_row, x));
        }
    }
    out
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn run_forward<'a>(params: &MlpParameters, input: &'a [f64], rows: usize) -> Trace<'a> {
    let activation = params.architecture().activation();
    let n_layers = params.architecture().num_layers();
    let mut trace = Trace {
        input,
        pre: Vec::with_capacity(n_layers),
        act: Vec::with_capacity(n_layers - 1),
    };
    for l in 0..n_layers {
        let layer = params.layer(l);
        let z = affine(
            trace.layer_input(l),
            rows,
            layer.weights,
            layer.bias,
            layer.in_dim,
        );
        if l + 1 < n_layers {
            trace.act.push(z.iter().map(|&v| activation.apply(v)).collect());
        }
        trace.pre.push(z);
    }
    trace
}

/// Logits of the network for every row of `batch`.
pub fn forward(params: &MlpParameters, batch: &LabeledBatch) -> Result<Logits> {
    check_batch(params, batch)?;
    let trace = run_forward(params, batch.features(), batch.len());
    let n_classes = params.architecture().output_dim();
    let mut pre = trace.pre;
    Logits::new(n_classes, pre.pop().expect("at least one layer"))
}

pub fn loss(params: &MlpParameters, batch: &LabeledBatch) -> Result<f64> {
    let logits = forward(params, batch)?;
    cross_entropy(&logits, batch.labels())
}

/// Output-layer error signal `dL/dlogits` plus per-row softmax and clamp
/// flags, shared by the gradient and Hessian-vector passes.
struct OutputGrad {
    loss: f64,
    probs: Vec<f64>,
    clamped: Vec<bool>,
    delta: Vec<f64>,
}

fn output_grad(logits: &[f64], labels: &[usize], n_classes: usize) -> OutputGrad {
    let n = labels.len();
    let inv_n = 1.0 / n as f64;
    let mut probs = vec![0.0; logits.len()];
    let mut delta = vec![0.0; logits.len()];
    let mut clamped = Vec::with_capacity(n);
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = &logits[i * n_classes..(i + 1) * n_classes];
        let (nll, hit_floor) = row_nll(row, y);
        total += nll;
        clamped.push(hit_floor);
        let p = &mut probs[i * n_classes..(i + 1) * n_classes];
        softmax_into(row, p);
        if !hit_floor {
            let d = &mut delta[i * n_classes..(i + 1) * n_classes];
            for (dc, &pc) in d.iter_mut().zip(p.iter()) {
                *dc = pc * inv_n;
            }
            d[y] -= inv_n;
        }
    }
    OutputGrad {
        loss: total * inv_n,
        probs,
        clamped,
        delta,
    }
}

/// Loss and its gradient with respect to every parameter.
pub fn loss_gradient(params: &MlpParameters, batch: &LabeledBatch) -> Result<(f64, MlpParameters)> {
    check_batch(params, batch)?;
    let arch = params.architecture();
    check_labels(batch.labels(), arch.output_dim())?;
    let activation = arch.activation();
    let rows = batch.len();
    let trace = run_forward(params, batch.features(), rows);
    let out = output_grad(trace.logits(), batch.labels(), arch.output_dim());

    let mut grad = params.zeros_like();
    let mut delta = out.delta;
    for l in (0..arch.num_layers()).rev() {
        let layer = params.layer(l);
        let (in_dim, out_dim) = (layer.in_dim, layer.out_dim);
        let input = trace.layer_input(l);
        {
            let g = grad.layer_mut(l);
            for i in 0..rows {
                let x = &input[i * in_dim..(i + 1) * in_dim];
                let d = &delta[i * out_dim..(i + 1) * out_dim];
                for (o, &d_io) in d.iter().enumerate() {
                    if d_io != 0.0 {
                        axpy(d_io, x, &mut g.weights[o * in_dim..(o + 1) * in_dim]);
                    }
                    g.bias[o] += d_io;
                }
            }
        }
        if l == 0 {
            break;
        }
        let z_prev = &trace.pre[l - 1];
        let a_prev = &trace.act[l - 1];
        let mut next = vec![0.0; rows * in_dim];
        for i in 0..rows {
            let d = &delta[i * out_dim..(i + 1) * out_dim];
            let dst = &mut next[i * in_dim..(i + 1) * in_dim];
            for (o, &d_io) in d.iter().enumerate() {
                if d_io != 0.0 {
                    axpy(d_io, &layer.weights[o * in_dim..(o + 1) * in_dim], dst);
                }
            }
            for k in 0..in_dim {
                let idx = i * in_dim + k;
                dst[k] *= activation.derivative(z_prev[idx], a_prev[idx]);
            }
        }
        delta = next;
    }
    Ok((out.loss, grad))
}

/// Exact product of the loss Hessian (with respect to the parameters) and
/// the parameter-shaped direction `v`.
pub fn hessian_vector_product(
    params: &MlpParameters,
    batch: &LabeledBatch,
    v: &MlpParameters,
) -> Result<MlpParameters> {
    check_batch(params, batch)?;
    if v.architecture() != params.architecture() {
        return Err(Error::Shape(
            "direction vector does not have the shape of the parameters".into(),
        ));
    }
    let arch = params.architecture();
    check_labels(batch.labels(), arch.output_dim())?;
    let activation = arch.activation();
    let n_layers = arch.num_layers();
    let n_classes = arch.output_dim();
    let rows = batch.len();
    let trace = run_forward(params, batch.features(), rows);

    // Forward R-pass: directional derivatives of pre-activations and
    // hidden activations along v.
    let mut r_pre: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
    let mut r_act: Vec<Vec<f64>> = Vec::with_capacity(n_layers - 1);
    for l in 0..n_layers {
        let layer = params.layer(l);
        let dir = v.layer(l);
        let (in_dim, out_dim) = (layer.in_dim, layer.out_dim);
        let mut rz = affine(trace.layer_input(l), rows, dir.weights, dir.bias, in_dim);
        if l > 0 {
            let ra = &r_act[l - 1];
            for i in 0..rows {
                let x = &ra[i * in_dim..(i + 1) * in_dim];
                for o in 0..out_dim {
                    rz[i * out_dim + o] += dot(&layer.weights[o * in_dim..(o + 1) * in_dim], x);
                }
            }
        }
        if l + 1 < n_layers {
            let z = &trace.pre[l];
            let a = &trace.act[l];
            r_act.push(
                rz.iter()
                    .enumerate()
                    .map(|(idx, &r)| activation.derivative(z[idx], a[idx]) * r)
                    .collect(),
            );
        }
        r_pre.push(rz);
    }

    let out = output_grad(trace.logits(), batch.labels(), n_classes);
    let inv_n = 1.0 / rows as f64;
    let mut delta = out.delta;
    let mut r_delta = vec![0.0; rows * n_classes];
    let r_logits = &r_pre[n_layers - 1];
    for i in 0..rows {
        if out.clamped[i] {
            continue;
        }
        let p = &out.probs[i * n_classes..(i + 1) * n_classes];
        let rz = &r_logits[i * n_classes..(i + 1) * n_classes];
        let mean = dot(p, rz);
        for c in 0..n_classes {
            r_delta[i * n_classes + c] = p[c] * (rz[c] - mean) * inv_n;
        }
    }

    let mut hv = params.zeros_like();
    for l in (0..n_layers).rev() {
        let layer = params.layer(l);
        let dir = v.layer(l);
        let (in_dim, out_dim) = (layer.in_dim, layer.out_dim);
        let input = trace.layer_input(l);
        {
            let h = hv.layer_mut(l);
            for i in 0..rows {
                let x = &input[i * in_dim..(i + 1) * in_dim];
                let d = &delta[i * out_dim..(i + 1) * out_dim];
                let rd = &r_delta[i * out_dim..(i + 1) * out_dim];
                for o in 0..out_dim {
                    let w_row = &mut h.weights[o * in_dim..(o + 1) * in_dim];
                    if rd[o] != 0.0 {
                        axpy(rd[o], x, w_row);
                    }
                    if l > 0 && d[o] != 0.0 {
                        axpy(d[o], &r_act[l - 1][i * in_dim..(i + 1) * in_dim], w_row);
                    }
                    h.bias[o] += rd[o];
                }
            }
        }
        if l == 0 {
            break;
        }
        let z_prev = &trace.pre[l - 1];
        let a_prev = &trace.act[l - 1];
        let rz_prev = &r_pre[l - 1];
        let mut next = vec![0.0; rows * in_dim];
        let mut r_next = vec![0.0; rows * in_dim];
        let mut back = vec![0.0; in_dim];
        let mut r_back = vec![0.0; in_dim];
        for i in 0..rows {
            back.iter_mut().for_each(|b| *b = 0.0);
            r_back.iter_mut().for_each(|b| *b = 0.0);
            let d = &delta[i * out_dim..(i + 1) * out_dim];
            let rd = &r_delta[i * out_dim..(i + 1) * out_dim];
            for o in 0..out_dim {
                let w_row = &layer.weights[o * in_dim..(o + 1) * in_dim];
                if d[o] != 0.0 {
                    axpy(d[o], w_row, &mut back);
                    axpy(d[o], &dir.weights[o * in_dim..(o + 1) * in_dim], &mut r_back);
                }
                if rd[o] != 0.0 {
                    axpy(rd[o], w_row, &mut r_back);
                }
            }
            for k in 0..in_dim {
                let idx = i * in_dim + k;
                let (z, a) = (z_prev[idx], a_prev[idx]);
                let d1 = activation.derivative(z, a);
                next[idx] = d1 * back[k];
                r_next[idx] =
                    activation.second_derivative(z, a) * rz_prev[idx] * back[k] + d1 * r_back[k];
            }
        }
        delta = next;
        r_delta = r_next;
    }
    Ok(hv)
}

/// `H·v` by central difference of [`loss_gradient`] with step
/// `r = 1e-4 (1 + |θ|∞) / (1 + |v|∞)`.
pub fn hessian_vector_product_fd(
    params: &MlpParameters,
    batch: &LabeledBatch,
    v: &MlpParameters,
) -> Result<MlpParameters> {
    if v.architecture() != params.architecture() {
        return Err(Error::Shape(
            "direction vector does not have the shape of the parameters".into(),
        ));
    }
    let r = 1e-4 * (1.0 + params.norm_inf()) / (1.0 + v.norm_inf());
    let mut plus = params.clone();
    plus.add_scaled(r, v);
    let mut minus = params.clone();
    minus.add_scaled(-r, v);
    let (_, g_plus) = loss_gradient(&plus, batch)?;
    let (_, g_minus) = loss_gradient(&minus, batch)?;
    let mut hv = g_plus;
    hv.add_scaled(-1.0, &g_minus);
    hv.scale(0.5 / r);
    Ok(hv)
}
