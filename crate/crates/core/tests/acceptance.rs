//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any criterion fails.
//!
//! Criterion 9 uses the CSV named by `EPISODIC_MAML_DATASET_CSV` when set
//! (label column `refactoring`, every other column a feature). Otherwise
//! it generates a stand-in CSV whose class sizes are the refactoring
//! counts divided by 50.

mod common;

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use episodic_maml::cli::{self, Command, RunConfig};
use episodic_maml::episodes::{
    EpisodeConfig, EpisodePool, Instance, SplitDocument, SyntheticTasks, TaskSampler,
};
use episodic_maml::eval::{read_jsonl, scratch_baseline, weighted_average, MetricsRecord};
use episodic_maml::gradcheck::{random_direction, random_meta_problem, random_problem};
use episodic_maml::maml::{
    architecture_for, meta_gradient, meta_test, meta_train, run_test_batches, GradMode, MamlConfig,
};
use episodic_maml::nn::{cross_entropy, hessian_vector_product, loss_gradient, Activation, Logits};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = f();
    let elapsed = start.elapsed();
    out.detail.push_str(&format!(", {elapsed:.2?}"));
    if let Some(limit) = limit {
        out.detail.push_str(&format!(" (limit {limit:?})"));
        out.passed &= elapsed < limit;
    }
    out
}

fn activation(i: usize) -> Activation {
    if i % 2 == 0 {
        Activation::Relu
    } else {
        Activation::Tanh
    }
}

fn gradient_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let p = random_problem(&mut rng, 200, activation(i));
        assert!(p.params.len() <= 200);
        let (_, analytic) = loss_gradient(&p.params, &p.batch).unwrap();
        worst = worst.max(rel_err(analytic.as_slice(), &fd_gradient(&p.params, &p.batch)));
    }
    outcome(worst <= 1e-5, format!("max rel-error {worst:.2e} (tolerance 1e-5)"))
}

fn hessian_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut worst, mut worst_sym): (f64, f64) = (0.0, 0.0);
    for i in 0..10 {
        let p = random_problem(&mut rng, 60, activation(i + 1));
        assert!(p.params.len() <= 60);
        let v = random_direction(&mut rng, &p.params);
        let u = random_direction(&mut rng, &p.params);
        let hv = hessian_vector_product(&p.params, &p.batch, &v).unwrap();
        let hu = hessian_vector_product(&p.params, &p.batch, &u).unwrap();
        let oracle = fd_hessian_times(&p.params, &p.batch, v.as_slice());
        worst = worst.max(rel_err(hv.as_slice(), &oracle));
        let (a, b) = (dot(v.as_slice(), hu.as_slice()), dot(u.as_slice(), hv.as_slice()));
        worst_sym = worst_sym.max((a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE));
    }
    outcome(
        worst <= 1e-4 && worst_sym <= 1e-6,
        format!("max HVP rel-error {worst:.2e} (1e-4), max symmetry error {worst_sym:.2e} (1e-6)"),
    )
}

fn loss_anchors() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in [2usize, 3, 5] {
        for c in [0.0, 3.7, -12.5] {
            let rows = 4;
            let logits = Logits::new(n, vec![c; n * rows]).unwrap();
            let labels: Vec<usize> = (0..rows).map(|i| i % n).collect();
            let l = cross_entropy(&logits, &labels).unwrap();
            worst = worst.max((l - (n as f64).ln()).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max |loss - ln N| {worst:.2e} (1e-12)"))
}

fn episode_structure() -> Outcome {
    let sizes = [60usize; 12];
    let instances = blob_instances(&sizes, 3, 303);
    let pool = EpisodePool::new(&instances).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(304);
    let mut configs = Vec::new();
    for n in [2, 3, 5] {
        for k in [3, 5, 10] {
            configs.push(EpisodeConfig::new(n, k, 15).unwrap());
        }
    }
    let mut failures = 0usize;
    for i in 0..10_000 {
        let cfg = if i < 9 * 500 {
            configs[i % 9]
        } else {
            let n = rng.random_range(2..=12);
            let k = rng.random_range(1..=20);
            let q = rng.random_range(1..=60 - k);
            EpisodeConfig::new(n, k, q).unwrap()
        };
        let ep = pool.sample_episode(&cfg, &mut rng).unwrap();
        if !episode_is_well_formed(&ep, &cfg, &instances, 60) {
            failures += 1;
        }
    }
    outcome(failures == 0, format!("10000 episodes, {failures} malformed"))
}

fn episode_is_well_formed(
    ep: &episodic_maml::episodes::Episode,
    cfg: &EpisodeConfig,
    instances: &[Instance],
    class_size: usize,
) -> bool {
    let (n, k, q) = (cfg.n_way, cfg.k_shot, cfg.q_query);
    if ep.support.len() != n * k || ep.query.len() != n * q || ep.class_map.len() != n {
        return false;
    }
    if ep.class_map.iter().collect::<HashSet<_>>().len() != n {
        return false;
    }
    for (labels, per) in [(ep.support.labels(), k), (ep.query.labels(), q)] {
        for c in 0..n {
            if labels.iter().filter(|&&y| y == c).count() != per {
                return false;
            }
        }
    }
    let mut seen = HashSet::new();
    for (batch, refs) in [(&ep.support, &ep.support_refs), (&ep.query, &ep.query_refs)] {
        for ((row, &y), r) in batch.rows().zip(batch.labels()).zip(refs.iter()) {
            if !seen.insert((r.class_id, r.index)) || ep.class_map[y] != r.class_id {
                return false;
            }
            let source = &instances[r.class_id.0 * class_size + r.index];
            if source.class_id != r.class_id || source.features != row {
                return false;
            }
        }
    }
    true
}

fn meta_objective_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst: f64 = 0.0;
    for i in 0..6 {
        let alpha = 0.1;
        let (theta, episodes) = random_meta_problem(&mut rng, 60, activation(i), 3, alpha).unwrap();
        let exact = meta_gradient(&theta, &episodes, alpha, 1, GradMode::Exact).unwrap();
        let numeric = central_diff(&theta, 1e-5, |p| one_step_meta_objective(p, &episodes, alpha));
        worst = worst.max(rel_err(exact.as_slice(), &numeric));
    }
    let mut ratios = Vec::new();
    for _ in 0..5 {
        let (theta, episodes) = random_meta_problem(&mut rng, 60, Activation::Tanh, 3, 1e-3).unwrap();
        let gap = |alpha: f64| {
            let exact = meta_gradient(&theta, &episodes, alpha, 1, GradMode::Exact).unwrap();
            let first = meta_gradient(&theta, &episodes, alpha, 1, GradMode::FirstOrder).unwrap();
            let diff: Vec<f64> = exact.as_slice().iter().zip(first.as_slice()).map(|(a, b)| a - b).collect();
            norm(&diff)
        };
        ratios.push(gap(5e-4) / gap(1e-3));
    }
    let ratios_ok = ratios.iter().all(|r| (0.4..=0.6).contains(r));
    outcome(
        worst <= 1e-4 && ratios_ok,
        format!("max rel-error {worst:.2e} (1e-4), first-order gap ratios {ratios:.4?} ([0.4, 0.6])"),
    )
}

fn synthetic_efficacy() -> Outcome {
    let tasks = SyntheticTasks { dim: 20, cluster_std: 0.5 };
    let episode = EpisodeConfig::new(2, 5, 15).unwrap();
    let maml = MamlConfig {
        alpha: 0.02,
        beta: 0.05,
        meta_iterations: 1000,
        meta_batch_size: 25,
        adaptation_steps: 1,
        grad_mode: GradMode::FirstOrder,
        seed: 7,
        test_batches: 4,
        test_batch_size: 25,
        ..MamlConfig::default()
    };
    let trained = meta_train(&tasks, &episode, &maml).unwrap();
    let adapted = meta_test(&trained.params, &tasks, &episode, &maml).unwrap();
    let arch = architecture_for(tasks.input_dim(), &episode, &maml).unwrap();
    let scratch = run_test_batches(&tasks, &episode, &maml, |_| Ok(()), |ep| {
        scratch_baseline(&arch, ep, 1, maml.alpha, maml.seed)
    })
    .unwrap();
    let mean = |r: &[MetricsRecord]| r.iter().map(|m| m.accuracy).sum::<f64>() / r.len() as f64;
    let (meta_acc, scratch_acc) = (mean(&adapted), mean(&scratch));
    outcome(
        meta_acc >= 0.80 && meta_acc - scratch_acc >= 0.10,
        format!(
            "100 test episodes: adapted accuracy {meta_acc:.4} (>= 0.80), scratch {scratch_acc:.4}, gap {:.4} (>= 0.10)",
            meta_acc - scratch_acc
        ),
    )
}

fn synth_bench_outputs(dir: &std::path::Path) -> Vec<Vec<u8>> {
    let mut cfg = RunConfig::default();
    cfg.maml.meta_iterations = 25;
    cfg.maml.meta_batch_size = 5;
    cfg.maml.test_batches = 3;
    cfg.maml.test_batch_size = 5;
    cfg.maml.alpha = 0.02;
    cfg.maml.beta = 0.05;
    cfg.maml.grad_mode = GradMode::Exact;
    cfg.maml.hidden_widths = vec![16, 16];
    cfg.io.checkpoint_path = dir.join("checkpoint.json");
    cfg.io.report_path = dir.join("metrics.jsonl");
    cfg.io.baseline_report_path = dir.join("baseline.jsonl");
    cfg.io.train_log_path = dir.join("train_log.jsonl");
    assert_eq!(cli::execute(Command::SynthBench, &cfg), cli::EXIT_OK);
    [&cfg.io.checkpoint_path, &cfg.io.report_path, &cfg.io.baseline_report_path, &cfg.io.train_log_path]
        .iter()
        .map(|p| fs::read(p).unwrap())
        .collect()
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = synth_bench_outputs(a.path());
    let second = synth_bench_outputs(b.path());
    let identical = first == second && first.iter().all(|f| !f.is_empty());
    outcome(
        identical,
        format!("checkpoint, metrics, baseline and training log byte-identical: {identical}"),
    )
}

fn weighted_reconciliation() -> Outcome {
    let counts = [6436u64, 654, 3991, 9723, 6709];
    assert_eq!(counts.iter().sum::<u64>(), 27513);
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let values: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
        let hand = (values[0] * 6436.0
            + values[1] * 654.0
            + values[2] * 3991.0
            + values[3] * 9723.0
            + values[4] * 6709.0)
            / 27513.0;
        worst = worst.max((weighted_average(&values, &counts).unwrap() - hand).abs());
    }
    for c in [0.0, 0.37, 0.91, 1.0] {
        worst = worst.max((weighted_average(&[c; 5], &counts).unwrap() - c).abs());
    }
    outcome(worst <= 1e-12, format!("max deviation {worst:.2e} (1e-12)"))
}

const META_TEST_CLASSES: [&str; 5] = [
    "extract and move method",
    "extract subclass",
    "extract variable",
    "move and rename class",
    "rename class",
];

fn dataset_smoke() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (csv, source) = match std::env::var_os("EPISODIC_MAML_DATASET_CSV") {
        Some(path) => (PathBuf::from(path), "supplied CSV"),
        None => {
            let path = dir.path().join("refactorings.csv");
            write_refactoring_csv(&path, &scaled_counts(50, 20), 6, 909);
            (path, "stand-in CSV")
        }
    };
    let mut cfg = RunConfig::default();
    cfg.data.csv_path = Some(csv);
    cfg.maml.meta_iterations = 500;
    cfg.maml.test_batches = 30;
    cfg.maml.test_batch_size = 25;
    cfg.io.split_path = dir.path().join("split.json");
    cfg.io.checkpoint_path = dir.path().join("checkpoint.json");
    cfg.io.train_log_path = dir.path().join("train_log.jsonl");
    cfg.io.report_path = dir.path().join("metrics.jsonl");

    let split_code = cli::execute(Command::Split, &cfg);
    let doc = SplitDocument::load(&cfg.io.split_path).ok();
    let split_ok = split_code == 0
        && doc.as_ref().is_some_and(|d| {
            d.meta_test.iter().map(String::as_str).collect::<BTreeSet<_>>()
                == META_TEST_CLASSES.into_iter().collect()
        });
    let train_code = cli::execute(Command::MetaTrain, &cfg);
    let test_code = cli::execute(Command::MetaTest, &cfg);
    let records: Vec<MetricsRecord> = read_jsonl(&cfg.io.report_path).unwrap_or_default();
    let in_unit = |v: f64| (0.0..=1.0).contains(&v);
    let records_ok = records.len() == 30
        && records.iter().enumerate().all(|(i, r)| {
            r.batch_index == i
                && in_unit(r.accuracy)
                && in_unit(r.precision)
                && in_unit(r.recall)
                && r.loss.is_finite()
                && r.loss >= 0.0
        });
    outcome(
        split_ok && train_code == 0 && test_code == 0 && records_ok,
        format!(
            "{source}: split exact {split_ok}, meta-train exit {train_code}, meta-test exit {test_code}, {} well-formed records {records_ok}",
            records.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Option<u64>, fn() -> Outcome); 9] = [
        ("1 gradient oracle", Some(5), gradient_oracle),
        ("2 Hessian oracle", Some(10), hessian_oracle),
        ("3 loss anchors", None, loss_anchors),
        ("4 episode structure", Some(30), episode_structure),
        ("5 meta-objective oracle", None, meta_objective_oracle),
        ("6 synthetic efficacy", Some(180), synthetic_efficacy),
        ("7 determinism", None, determinism),
        ("8 weighted-average reconciliation", None, weighted_reconciliation),
        ("9 dataset smoke", None, dataset_smoke),
    ];
    let mut all_passed = true;
    for (name, limit, run) in criteria {
        let result = timed(limit.map(Duration::from_secs), run);
        all_passed &= result.passed;
        let verdict = if result.passed { "PASS" } else { "FAIL" };
        println!("criterion {name:<36} {verdict}  {}", result.detail);
    }
    if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
