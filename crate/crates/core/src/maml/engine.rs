//! Inner adaptation, meta-gradients and the meta-train / meta-test loops.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::parallel::map_in_order;
use super::{GradMode, MamlConfig};
use crate::episodes::{Episode, EpisodeConfig, TaskSampler};
use crate::eval::{aggregate_metrics, episode_metrics, MetricsRecord};
use crate::nn::{
    forward, hessian_vector_product, init_parameters, loss, loss_gradient, LabeledBatch,
    MlpArchitecture, MlpParameters,
};
use crate::{Error, Result};

const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;

/// Episode-sampling generator for the meta-train loop.
pub fn train_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(TRAIN_STREAM);
    rng
}

/// Episode-sampling generator for meta-test and baseline runs. Both use the
/// same stream so they see identical episodes for the same seed.
pub fn test_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(TEST_STREAM);
    rng
}

/// The iterates `θ_0 = θ, θ_{s+1} = θ_s − α ∇L_support(θ_s)` for
/// `s < steps`, all `steps + 1` of them.
fn inner_trajectory(
    theta: &MlpParameters,
    support: &LabeledBatch,
    steps: usize,
    alpha: f64,
) -> Result<Vec<MlpParameters>> {
    let mut path = Vec::with_capacity(steps + 1);
    path.push(theta.clone());
    for _ in 0..steps {
        let current = path.last().expect("trajectory starts non-empty");
        let (_, g) = loss_gradient(current, support)?;
        let mut next = current.clone();
        next.add_scaled(-alpha, &g);
        path.push(next);
    }
    Ok(path)
}

/// `steps` full-batch gradient-descent steps on the support loss. The
/// input parameters are left untouched.
pub fn inner_adapt(
    theta: &MlpParameters,
    support: &LabeledBatch,
    steps: usize,
    alpha: f64,
) -> Result<MlpParameters> {
    let mut adapted = theta.clone();
    for _ in 0..steps {
        let (_, g) = loss_gradient(&adapted, support)?;
        adapted.add_scaled(-alpha, &g);
    }
    Ok(adapted)
}

/// Outer gradient plus the mean query losses before and after adaptation.
#[derive(Debug, Clone)]
pub struct MetaStep {
    pub gradient: MlpParameters,
    pub pre_adaptation_loss: f64,
    pub post_adaptation_loss: f64,
}

struct EpisodeContribution {
    gradient: MlpParameters,
    pre_loss: f64,
    post_loss: f64,
}

fn episode_contribution(
    theta: &MlpParameters,
    episode: &Episode,
    alpha: f64,
    steps: usize,
    mode: GradMode,
) -> Result<EpisodeContribution> {
    let path = inner_trajectory(theta, &episode.support, steps, alpha)?;
    let adapted = path.last().expect("trajectory is non-empty");
    let (post_loss, mut g) = loss_gradient(adapted, &episode.query)?;
    if mode == GradMode::Exact {
        // Chain rule through every inner step: g ← (I − α H(θ_s)) g.
        for theta_s in path[..steps].iter().rev() {
            let hg = hessian_vector_product(theta_s, &episode.support, &g)?;
            g.add_scaled(-alpha, &hg);
        }
    }
    let pre_loss = if steps == 0 {
        post_loss
    } else {
        loss(theta, &episode.query)?
    };
    Ok(EpisodeContribution {
        gradient: g,
        pre_loss,
        post_loss,
    })
}

/// Gradient of `mean_i L_query_i(adapt_i(θ))` over the episodes. Episodes
/// may be processed in parallel; the reduction always runs in index order.
pub fn meta_gradient_with_losses(
    theta: &MlpParameters,
    episodes: &[Episode],
    alpha: f64,
    steps: usize,
    mode: GradMode,
) -> Result<MetaStep> {
    if episodes.is_empty() {
        return Err(Error::Argument("meta-gradient needs at least one episode".into()));
    }
    let parts = map_in_order(episodes, |ep| episode_contribution(theta, ep, alpha, steps, mode));
    let mut gradient = theta.zeros_like();
    let (mut pre, mut post) = (0.0, 0.0);
    for part in parts {
        let part = part?;
        gradient.add_scaled(1.0, &part.gradient);
        pre += part.pre_loss;
        post += part.post_loss;
    }
    let m = episodes.len() as f64;
    gradient.scale(1.0 / m);
    Ok(MetaStep {
        gradient,
        pre_adaptation_loss: pre / m,
        post_adaptation_loss: post / m,
    })
}

pub fn meta_gradient(
    theta: &MlpParameters,
    episodes: &[Episode],
    alpha: f64,
    steps: usize,
    mode: GradMode,
) -> Result<MlpParameters> {
    meta_gradient_with_losses(theta, episodes, alpha, steps, mode).map(|s| s.gradient)
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    /// 1-based meta-iteration.
    pub iteration: usize,
    pub pre_adaptation_query_loss: f64,
    pub post_adaptation_query_loss: f64,
}

#[derive(Debug, Clone)]
pub struct MetaTrainOutput {
    pub params: MlpParameters,
    pub log: Vec<TrainLogEntry>,
}

pub fn architecture_for(
    input_dim: usize,
    episode_cfg: &EpisodeConfig,
    maml_cfg: &MamlConfig,
) -> Result<MlpArchitecture> {
    MlpArchitecture::new(
        input_dim,
        maml_cfg.hidden_widths.clone(),
        episode_cfg.n_way,
        maml_cfg.activation,
    )
}

pub fn meta_train<S: TaskSampler>(
    sampler: &S,
    episode_cfg: &EpisodeConfig,
    maml_cfg: &MamlConfig,
) -> Result<MetaTrainOutput> {
    meta_train_with(sampler, episode_cfg, maml_cfg, |_| Ok(()))
}

/// Meta-training from `init_parameters(seed)`: every iteration samples
/// `meta_batch_size` episodes and applies `θ ← θ − β · meta_gradient`.
/// `on_iteration` sees each log entry as soon as it is produced.
pub fn meta_train_with<S, F>(
    sampler: &S,
    episode_cfg: &EpisodeConfig,
    maml_cfg: &MamlConfig,
    mut on_iteration: F,
) -> Result<MetaTrainOutput>
where
    S: TaskSampler,
    F: FnMut(&TrainLogEntry) -> Result<()>,
{
    episode_cfg.validate()?;
    maml_cfg.validate()?;
    let arch = architecture_for(sampler.input_dim(), episode_cfg, maml_cfg)?;
    let mut theta = init_parameters(&arch, maml_cfg.seed);
    let mut rng = train_rng(maml_cfg.seed);
    let mut log = Vec::with_capacity(maml_cfg.meta_iterations);
    for iteration in 1..=maml_cfg.meta_iterations {
        let episodes = sampler.sample_batch(episode_cfg, maml_cfg.meta_batch_size, &mut rng)?;
        let step = meta_gradient_with_losses(
            &theta,
            &episodes,
            maml_cfg.alpha,
            maml_cfg.adaptation_steps,
            maml_cfg.grad_mode,
        )?;
        theta.add_scaled(-maml_cfg.beta, &step.gradient);
        if !theta.all_finite() {
            return Err(Error::Validation(format!(
                "parameters became non-finite at meta-iteration {iteration}; lower beta or alpha"
            )));
        }
        let entry = TrainLogEntry {
            iteration,
            pre_adaptation_query_loss: step.pre_adaptation_loss,
            post_adaptation_query_loss: step.post_adaptation_loss,
        };
        on_iteration(&entry)?;
        log.push(entry);
    }
    Ok(MetaTrainOutput { params: theta, log })
}

/// Adapts a copy of `theta` on the support set and scores the query set.
pub fn adapt_and_score(
    theta: &MlpParameters,
    episode: &Episode,
    steps: usize,
    alpha: f64,
) -> Result<MetricsRecord> {
    let adapted = inner_adapt(theta, &episode.support, steps, alpha)?;
    let logits = forward(&adapted, &episode.query)?;
    episode_metrics(&logits, episode.query.labels())
}

/// Scores every episode of a batch with `score` (in parallel) and averages.
pub fn score_batch<F>(episodes: &[Episode], batch_index: usize, score: F) -> Result<MetricsRecord>
where
    F: Fn(&Episode) -> Result<MetricsRecord> + Sync + Send,
{
    let records = map_in_order(episodes, score)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    aggregate_metrics(&records, batch_index)
}

pub fn meta_test<S: TaskSampler>(
    theta: &MlpParameters,
    sampler: &S,
    episode_cfg: &EpisodeConfig,
    maml_cfg: &MamlConfig,
) -> Result<Vec<MetricsRecord>> {
    meta_test_with(theta, sampler, episode_cfg, maml_cfg, |_| Ok(()))
}

/// `test_batches` batches of `test_batch_size` episodes from the test
/// stream; each episode adapts its own copy of `theta`. Yields one
/// averaged record per batch, in batch order.
pub fn meta_test_with<S, F>(
    theta: &MlpParameters,
    sampler: &S,
    episode_cfg: &EpisodeConfig,
    maml_cfg: &MamlConfig,
    on_batch: F,
) -> Result<Vec<MetricsRecord>>
where
    S: TaskSampler,
    F: FnMut(&MetricsRecord) -> Result<()>,
{
    let (steps, alpha) = (maml_cfg.adaptation_steps, maml_cfg.alpha);
    run_test_batches(sampler, episode_cfg, maml_cfg, on_batch, |ep| {
        adapt_and_score(theta, ep, steps, alpha)
    })
}

/// Shared driver for meta-test and baseline evaluation: identical episode
/// stream, caller-chosen scoring.
pub fn run_test_batches<S, F, G>(
    sampler: &S,
    episode_cfg: &EpisodeConfig,
    maml_cfg: &MamlConfig,
    mut on_batch: F,
    score: G,
) -> Result<Vec<MetricsRecord>>
where
    S: TaskSampler,
    F: FnMut(&MetricsRecord) -> Result<()>,
    G: Fn(&Episode) -> Result<MetricsRecord> + Sync + Send,
{
    episode_cfg.validate()?;
    maml_cfg.validate()?;
    let mut rng = test_rng(maml_cfg.seed);
    let mut out = Vec::with_capacity(maml_cfg.test_batches);
    for batch_index in 0..maml_cfg.test_batches {
        let episodes = sampler.sample_batch(episode_cfg, maml_cfg.test_batch_size, &mut rng)?;
        let record = score_batch(&episodes, batch_index, &score)?;
        on_batch(&record)?;
        out.push(record);
    }
    Ok(out)
}
