//! Meta-train on Gaussian-cluster tasks and compare the adapted network
//! against a network trained from scratch on the same test episodes.
//!
//! ```text
//! cargo run --release --example synthetic_maml -- [alpha] [beta] [iterations] [first_order|exact]
//! ```

use std::time::Instant;

use episodic_maml::episodes::{EpisodeConfig, SyntheticTasks};
use episodic_maml::eval::{scratch_baseline, MetricsRecord};
use episodic_maml::maml::{architecture_for, meta_test, meta_train, run_test_batches, GradMode, MamlConfig};

fn mean_accuracy(records: &[MetricsRecord]) -> f64 {
    records.iter().map(|r| r.accuracy).sum::<f64>() / records.len() as f64
}

fn main() -> episodic_maml::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    let grad_mode = match args.get(3).map(String::as_str) {
        Some("exact") => GradMode::Exact,
        _ => GradMode::FirstOrder,
    };

    let tasks = SyntheticTasks { dim: 20, cluster_std: 0.5 };
    let episode = EpisodeConfig::new(2, 5, 15)?;
    let maml = MamlConfig {
        alpha: arg(0, 0.02),
        beta: arg(1, 0.05),
        meta_iterations: arg(2, 1000.0) as usize,
        meta_batch_size: 25,
        adaptation_steps: 1,
        grad_mode,
        seed: 7,
        test_batches: 4,
        test_batch_size: 25,
        ..MamlConfig::default()
    };

    let start = Instant::now();
    let trained = meta_train(&tasks, &episode, &maml)?;
    let first = trained.log.first().map(|e| e.post_adaptation_query_loss);
    let last = trained.log.last().map(|e| e.post_adaptation_query_loss);
    println!("post-adaptation query loss: {first:?} -> {last:?}");

    let adapted = meta_test(&trained.params, &tasks, &episode, &maml)?;
    let arch = architecture_for(tasks.dim, &episode, &maml)?;
    let scratch = run_test_batches(&tasks, &episode, &maml, |_| Ok(()), |ep| {
        scratch_baseline(&arch, ep, maml.adaptation_steps, maml.alpha, maml.seed)
    })?;

    println!("alpha {} beta {} mode {grad_mode:?}", maml.alpha, maml.beta);
    println!("meta-learned init: accuracy {:.4}", mean_accuracy(&adapted));
    println!("scratch init:      accuracy {:.4}", mean_accuracy(&scratch));
    println!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
