//! Finite-difference oracles for the analytic derivatives in [`crate::nn`]
//! and the meta-gradient in [`crate::maml`].
//!
//! Every oracle here is built only from loss evaluations (or, for the
//! Hessian, from the first-order gradient), never from the code path it
//! checks. Errors are reported as norm-wise relative errors
//! `|a - b|₂ / max(|a|₂, |b|₂)`.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::episodes::Episode;
use crate::maml::{meta_gradient, GradMode};
use crate::nn::{
    hessian_vector_product, init_parameters, loss, loss_gradient, Activation, LabeledBatch,
    MlpArchitecture, MlpParameters,
};
use crate::Result;

pub const GRADIENT_TOLERANCE: f64 = 1e-5;
pub const HVP_TOLERANCE: f64 = 1e-4;
pub const HVP_SYMMETRY_TOLERANCE: f64 = 1e-6;
pub const META_GRADIENT_TOLERANCE: f64 = 1e-4;

/// Pre-activations closer to zero than this are avoided for ReLU nets so
/// that no finite-difference probe crosses a kink.
const RELU_MARGIN: f64 = 1e-3;

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Textbook forward pass over nested rows, returning the logits and the
/// pre-activations of every hidden layer.
pub fn naive_forward(params: &MlpParameters, rows: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let arch = params.architecture();
    let n_layers = arch.num_layers();
    let mut hidden_pre = Vec::new();
    let mut logits = Vec::with_capacity(rows.len());
    for x in rows {
        let mut a = x.clone();
        for l in 0..n_layers {
            let layer = params.layer(l);
            let mut z = vec![0.0; layer.out_dim];
            for (o, zo) in z.iter_mut().enumerate() {
                let mut s = layer.bias[o];
                for k in 0..layer.in_dim {
                    s += layer.weights[o * layer.in_dim + k] * a[k];
                }
                *zo = s;
            }
            if l + 1 < n_layers {
                hidden_pre.push(z.clone());
                a = z.iter().map(|&v| arch.activation().apply(v)).collect();
            } else {
                logits.push(z);
            }
        }
    }
    (logits, hidden_pre)
}

/// Smallest |pre-activation| over all hidden units and rows.
pub fn hidden_margin(params: &MlpParameters, batch: &LabeledBatch) -> f64 {
    let rows: Vec<Vec<f64>> = batch.rows().map(<[f64]>::to_vec).collect();
    let (_, pre) = naive_forward(params, &rows);
    pre.iter()
        .flatten()
        .fold(f64::INFINITY, |m, z| m.min(z.abs()))
}

/// Central differences of the loss with `h = 1e-6 · max(1, |θ_j|)`.
pub fn finite_difference_gradient(params: &MlpParameters, batch: &LabeledBatch) -> Result<Vec<f64>> {
    let mut probe = params.clone();
    let mut grad = Vec::with_capacity(params.len());
    for j in 0..params.len() {
        let theta_j = params.as_slice()[j];
        let h = 1e-6 * theta_j.abs().max(1.0);
        probe.as_mut_slice()[j] = theta_j + h;
        let up = loss(&probe, batch)?;
        probe.as_mut_slice()[j] = theta_j - h;
        let down = loss(&probe, batch)?;
        probe.as_mut_slice()[j] = theta_j;
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Explicit Hessian, column by column, by central differences of the
/// analytic gradient. Returned as `columns[j] = H e_j`.
pub fn finite_difference_hessian(
    params: &MlpParameters,
    batch: &LabeledBatch,
) -> Result<Vec<Vec<f64>>> {
    let mut probe = params.clone();
    let mut columns = Vec::with_capacity(params.len());
    for j in 0..params.len() {
        let theta_j = params.as_slice()[j];
        let h = 1e-5 * theta_j.abs().max(1.0);
        probe.as_mut_slice()[j] = theta_j + h;
        let (_, up) = loss_gradient(&probe, batch)?;
        probe.as_mut_slice()[j] = theta_j - h;
        let (_, down) = loss_gradient(&probe, batch)?;
        probe.as_mut_slice()[j] = theta_j;
        columns.push(
            up.as_slice()
                .iter()
                .zip(down.as_slice())
                .map(|(u, d)| (u - d) / (2.0 * h))
                .collect(),
        );
    }
    Ok(columns)
}

pub fn dense_matvec(columns: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let n = columns.first().map_or(0, Vec::len);
    let mut out = vec![0.0; n];
    for (col, &vj) in columns.iter().zip(v) {
        for (o, c) in out.iter_mut().zip(col) {
            *o += c * vj;
        }
    }
    out
}

/// `J(θ) = mean_i L_query_i(θ_i)` with `θ_i` obtained from `steps` plain
/// gradient steps on the support set of episode `i`.
pub fn meta_objective(
    theta: &MlpParameters,
    episodes: &[Episode],
    alpha: f64,
    steps: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for ep in episodes {
        let mut adapted = theta.clone();
        for _ in 0..steps {
            let (_, g) = loss_gradient(&adapted, &ep.support)?;
            adapted.add_scaled(-alpha, &g);
        }
        total += loss(&adapted, &ep.query)?;
    }
    Ok(total / episodes.len() as f64)
}

pub fn finite_difference_meta_gradient(
    theta: &MlpParameters,
    episodes: &[Episode],
    alpha: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    let mut probe = theta.clone();
    let mut grad = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        let theta_j = theta.as_slice()[j];
        let h = 1e-5 * theta_j.abs().max(1.0);
        probe.as_mut_slice()[j] = theta_j + h;
        let up = meta_objective(&probe, episodes, alpha, steps)?;
        probe.as_mut_slice()[j] = theta_j - h;
        let down = meta_objective(&probe, episodes, alpha, steps)?;
        probe.as_mut_slice()[j] = theta_j;
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// A random network together with a batch it can score.
#[derive(Debug, Clone)]
pub struct Problem {
    pub params: MlpParameters,
    pub batch: LabeledBatch,
}

fn random_architecture(
    rng: &mut ChaCha8Rng,
    max_params: usize,
    activation: Activation,
) -> MlpArchitecture {
    loop {
        let input = rng.random_range(2..=4);
        let depth = rng.random_range(1..=2);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..=8)).collect();
        let output = rng.random_range(2..=5);
        let arch = MlpArchitecture::new(input, hidden, output, activation)
            .expect("generated dims are positive");
        if arch.parameter_count() <= max_params {
            return arch;
        }
    }
}

fn random_batch(rng: &mut ChaCha8Rng, dim: usize, n_classes: usize, rows: usize) -> LabeledBatch {
    let features = (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels = (0..rows).map(|_| rng.random_range(0..n_classes)).collect();
    LabeledBatch::new(dim, features, labels).expect("generated batch is well formed")
}

/// Glorot weights with small random biases.
fn random_params(rng: &mut ChaCha8Rng, arch: &MlpArchitecture) -> MlpParameters {
    let mut p = init_parameters(arch, rng.random());
    for l in 0..arch.num_layers() {
        for b in p.layer_mut(l).bias.iter_mut() {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    p
}

pub fn random_direction(rng: &mut ChaCha8Rng, like: &MlpParameters) -> MlpParameters {
    let mut v = like.zeros_like();
    for x in v.as_mut_slice() {
        *x = rng.random_range(-1.0..1.0);
    }
    v
}

/// Draws a network of at most `max_params` parameters and a batch for it.
/// ReLU problems are redrawn until every hidden unit is at least
/// `RELU_MARGIN` away from its kink.
pub fn random_problem(rng: &mut ChaCha8Rng, max_params: usize, activation: Activation) -> Problem {
    loop {
        let arch = random_architecture(rng, max_params, activation);
        let params = random_params(rng, &arch);
        let rows = rng.random_range(3..=8);
        let batch = random_batch(rng, arch.input_dim(), arch.output_dim(), rows);
        if activation == Activation::Tanh || hidden_margin(&params, &batch) > RELU_MARGIN {
            return Problem { params, batch };
        }
    }
}

/// A tiny meta-learning instance: initial parameters and a few episodes
/// with support and query batches.
pub fn random_meta_problem(
    rng: &mut ChaCha8Rng,
    max_params: usize,
    activation: Activation,
    n_episodes: usize,
    alpha: f64,
) -> Result<(MlpParameters, Vec<Episode>)> {
    'retry: loop {
        let arch = random_architecture(rng, max_params, activation);
        let theta = random_params(rng, &arch);
        let n = arch.output_dim();
        let mut episodes = Vec::with_capacity(n_episodes);
        for _ in 0..n_episodes {
            let rows = rng.random_range(2..=5);
            let support = random_batch(rng, arch.input_dim(), n, rows);
            let rows = rng.random_range(3..=6);
            let query = random_batch(rng, arch.input_dim(), n, rows);
            if activation == Activation::Relu {
                let (_, g) = loss_gradient(&theta, &support)?;
                let mut adapted = theta.clone();
                adapted.add_scaled(-alpha, &g);
                if hidden_margin(&theta, &support) <= RELU_MARGIN
                    || hidden_margin(&adapted, &query) <= RELU_MARGIN
                {
                    continue 'retry;
                }
            }
            episodes.push(Episode::from_batches(support, query, (0..n).collect())?);
        }
        return Ok((theta, episodes));
    }
}

/// Largest observed errors of one oracle sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub gradient_max_rel_error: f64,
    pub hvp_max_rel_error: f64,
    pub hvp_max_symmetry_error: f64,
    pub meta_gradient_max_rel_error: f64,
    pub elapsed: Duration,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.gradient_max_rel_error <= GRADIENT_TOLERANCE
            && self.hvp_max_rel_error <= HVP_TOLERANCE
            && self.hvp_max_symmetry_error <= HVP_SYMMETRY_TOLERANCE
            && self.meta_gradient_max_rel_error <= META_GRADIENT_TOLERANCE
    }
}

pub fn gradient_sweep(rng: &mut ChaCha8Rng, nets: usize, max_params: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..nets {
        let activation = if i % 2 == 0 { Activation::Relu } else { Activation::Tanh };
        let Problem { params, batch } = random_problem(rng, max_params, activation);
        let (_, analytic) = loss_gradient(&params, &batch)?;
        let numeric = finite_difference_gradient(&params, &batch)?;
        worst = worst.max(relative_error(analytic.as_slice(), &numeric));
    }
    Ok(worst)
}

/// Returns `(max HVP relative error, max symmetry error)`.
pub fn hvp_sweep(rng: &mut ChaCha8Rng, nets: usize, max_params: usize) -> Result<(f64, f64)> {
    let mut worst_hvp: f64 = 0.0;
    let mut worst_sym: f64 = 0.0;
    for i in 0..nets {
        let activation = if i % 2 == 0 { Activation::Tanh } else { Activation::Relu };
        let Problem { params, batch } = random_problem(rng, max_params, activation);
        let v = random_direction(rng, &params);
        let u = random_direction(rng, &params);
        let hv = hessian_vector_product(&params, &batch, &v)?;
        let columns = finite_difference_hessian(&params, &batch)?;
        let oracle = dense_matvec(&columns, v.as_slice());
        worst_hvp = worst_hvp.max(relative_error(hv.as_slice(), &oracle));

        let hu = hessian_vector_product(&params, &batch, &u)?;
        let (a, b) = (v.dot(&hu), u.dot(&hv));
        let scale = a.abs().max(b.abs());
        let sym = if scale == 0.0 { 0.0 } else { (a - b).abs() / scale };
        worst_sym = worst_sym.max(sym);
    }
    Ok((worst_hvp, worst_sym))
}

pub fn meta_gradient_sweep(rng: &mut ChaCha8Rng, instances: usize, alpha: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let activation = if i % 2 == 0 { Activation::Tanh } else { Activation::Relu };
        let (theta, episodes) = random_meta_problem(rng, 60, activation, 3, alpha)?;
        let exact = meta_gradient(&theta, &episodes, alpha, 1, GradMode::Exact)?;
        let numeric = finite_difference_meta_gradient(&theta, &episodes, alpha, 1)?;
        worst = worst.max(relative_error(exact.as_slice(), &numeric));
    }
    Ok(worst)
}

/// Gradient check on 20 nets (≤200 parameters), Hessian check on 10 nets
/// (≤60 parameters) and meta-gradient check on 6 tiny instances.
pub fn run_suite(seed: u64) -> Result<GradcheckReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gradient_max_rel_error = gradient_sweep(&mut rng, 20, 200)?;
    let (hvp_max_rel_error, hvp_max_symmetry_error) = hvp_sweep(&mut rng, 10, 60)?;
    let meta_gradient_max_rel_error = meta_gradient_sweep(&mut rng, 6, 0.1)?;
    Ok(GradcheckReport {
        gradient_max_rel_error,
        hvp_max_rel_error,
        hvp_max_symmetry_error,
        meta_gradient_max_rel_error,
        elapsed: start.elapsed(),
    })
}
