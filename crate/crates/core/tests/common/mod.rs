//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use episodic_maml::episodes::{ClassId, Episode, Instance, REFACTORING_TYPE_COUNTS};
use episodic_maml::nn::{loss, loss_gradient, LabeledBatch, MlpParameters};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central differences of a scalar function of the flat parameter vector.
pub fn central_diff<F>(theta: &MlpParameters, h_scale: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&MlpParameters) -> f64,
{
    let mut probe = theta.clone();
    (0..theta.len())
        .map(|j| {
            let t = theta.as_slice()[j];
            let h = h_scale * t.abs().max(1.0);
            probe.as_mut_slice()[j] = t + h;
            let up = f(&probe);
            probe.as_mut_slice()[j] = t - h;
            let down = f(&probe);
            probe.as_mut_slice()[j] = t;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn fd_gradient(theta: &MlpParameters, batch: &LabeledBatch) -> Vec<f64> {
    central_diff(theta, 1e-6, |p| loss(p, batch).unwrap())
}

/// `H v` from an explicit Hessian assembled by differencing gradients.
pub fn fd_hessian_times(theta: &MlpParameters, batch: &LabeledBatch, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; theta.len()];
    let mut probe = theta.clone();
    for (j, &vj) in v.iter().enumerate() {
        let t = theta.as_slice()[j];
        let h = 1e-5 * t.abs().max(1.0);
        probe.as_mut_slice()[j] = t + h;
        let (_, up) = loss_gradient(&probe, batch).unwrap();
        probe.as_mut_slice()[j] = t - h;
        let (_, down) = loss_gradient(&probe, batch).unwrap();
        probe.as_mut_slice()[j] = t;
        for (o, (u, d)) in out.iter_mut().zip(up.as_slice().iter().zip(down.as_slice())) {
            *o += vj * (u - d) / (2.0 * h);
        }
    }
    out
}

/// Mean query loss after one plain gradient step on each support set.
pub fn one_step_meta_objective(theta: &MlpParameters, episodes: &[Episode], alpha: f64) -> f64 {
    episodes
        .iter()
        .map(|ep| {
            let (_, g) = loss_gradient(theta, &ep.support).unwrap();
            let mut adapted = theta.clone();
            adapted.add_scaled(-alpha, &g);
            loss(&adapted, &ep.query).unwrap()
        })
        .sum::<f64>()
        / episodes.len() as f64
}

/// `n_classes` Gaussian blobs in `dim` dimensions with the given sizes.
pub fn blob_instances(sizes: &[usize], dim: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (c, &size) in sizes.iter().enumerate() {
        let mean: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        for _ in 0..size {
            let features = mean.iter().map(|m| m + rng.random_range(-1.0..1.0)).collect();
            out.push(Instance::new(features, ClassId(c)));
        }
    }
    out
}

/// The refactoring class counts scaled down by `divisor` (rounded up, at
/// least `floor`), which keeps the five scarcest classes scarcest.
pub fn scaled_counts(divisor: usize, floor: usize) -> Vec<(&'static str, usize)> {
    REFACTORING_TYPE_COUNTS
        .iter()
        .map(|&(name, count)| (name, count.div_ceil(divisor).max(floor)))
        .collect()
}

/// Writes a CSV with a `refactoring` label column and `dim` numeric
/// metric columns, one row per instance, rows interleaved across classes.
pub fn write_refactoring_csv(path: &Path, counts: &[(&str, usize)], dim: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = counts
        .iter()
        .map(|_| (0..dim).map(|_| rng.random_range(0.0..50.0)).collect())
        .collect();
    let mut remaining: Vec<usize> = counts.iter().map(|&(_, n)| n).collect();
    let mut text = String::from("refactoring");
    for d in 0..dim {
        write!(text, ",metric_{d}").unwrap();
    }
    text.push('\n');
    while remaining.iter().any(|&n| n > 0) {
        for (c, left) in remaining.iter_mut().enumerate() {
            if *left == 0 {
                continue;
            }
            *left -= 1;
            text.push_str(counts[c].0);
            for m in &means[c] {
                write!(text, ",{:.4}", m + rng.random_range(-5.0..5.0)).unwrap();
            }
            text.push('\n');
        }
    }
    fs::write(path, text).unwrap();
}
