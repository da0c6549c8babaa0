//! Command runner behind the `episodic-maml` binary.
//!
//! Every command takes a [`RunConfig`] and returns a process exit status:
//! `0` on success, `1` for usage or configuration problems, `2` for data,
//! I/O and numeric failures, and `3` when `gradcheck` finds an error above
//! tolerance.

mod config;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::episodes::{
    apply_standardization, compute_norm_stats, ingest_csv, split_by_scarcity, ClassRegistry,
    EpisodePool, Instance, MetaSplit, NormStats, Side, TaskSampler,
};
use crate::eval::{scratch_baseline, weighted_average, JsonLinesWriter, MetricsRecord};
use crate::gradcheck::{self, run_suite};
use crate::maml::{
    architecture_for, load_checkpoint, meta_test_with, meta_train_with, run_test_batches,
    save_checkpoint, Checkpoint, TrainLogEntry, TrainingEcho,
};
use crate::nn::MlpParameters;
use crate::{Error, Result};

pub use config::{DataConfig, IoConfig, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

pub const USAGE: &str = "\
usage: episodic-maml <command> [--config <path>] [--set key=value]...

commands:
  split        split classes by scarcity and write the split JSON
  meta-train   meta-train on the meta-train classes, write checkpoint and training log
  meta-test    adapt the checkpoint to meta-test episodes, write metrics JSONL
  baseline     train from scratch on the same meta-test episodes, write metrics JSONL
  synth-bench  meta-train, meta-test and baseline on synthetic Gaussian tasks
  gradcheck    compare analytic derivatives with finite differences";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Split,
    MetaTrain,
    MetaTest,
    Baseline,
    SynthBench,
    Gradcheck,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Split,
        Command::MetaTrain,
        Command::MetaTest,
        Command::Baseline,
        Command::SynthBench,
        Command::Gradcheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Split => "split",
            Command::MetaTrain => "meta-train",
            Command::MetaTest => "meta-test",
            Command::Baseline => "baseline",
            Command::SynthBench => "synth-bench",
            Command::Gradcheck => "gradcheck",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown command {s:?}")))
    }
}

/// Exit status for an error: usage and configuration problems map to 1,
/// everything else to 2.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Argument(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Runs `command` and reports failures on stderr.
pub fn execute(command: Command, cfg: &RunConfig) -> i32 {
    let outcome = cfg.validate().and_then(|()| match command {
        Command::Split => run_split(cfg).map(|()| EXIT_OK),
        Command::MetaTrain => run_meta_train(cfg).map(|()| EXIT_OK),
        Command::MetaTest => run_meta_test(cfg).map(|()| EXIT_OK),
        Command::Baseline => run_baseline(cfg).map(|()| EXIT_OK),
        Command::SynthBench => run_synth_bench(cfg).map(|()| EXIT_OK),
        Command::Gradcheck => run_gradcheck(cfg),
    });
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

/// Parses the command name first so an unknown name yields usage text.
pub fn execute_named(command: &str, cfg: &RunConfig) -> i32 {
    match command.parse::<Command>() {
        Ok(c) => execute(c, cfg),
        Err(err) => {
            eprintln!("error: {err}\n\n{USAGE}");
            EXIT_USAGE
        }
    }
}

struct Dataset {
    registry: ClassRegistry,
    split: MetaSplit,
    instances: Vec<Instance>,
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg
        .data
        .csv_path
        .as_deref()
        .ok_or_else(|| Error::Config("data.csv_path is required for this command".into()))?;
    let (instances, registry) = ingest_csv(path, &cfg.data.label_column, &cfg.data.feature_columns)?;
    let split = split_by_scarcity(&registry, cfg.data.n_test_classes)?;
    Ok(Dataset {
        registry,
        split,
        instances,
    })
}

impl Dataset {
    fn train_stats(&self) -> Result<NormStats> {
        let train: Vec<Instance> = self
            .instances
            .iter()
            .filter(|i| self.split.meta_train().contains(&i.class_id))
            .cloned()
            .collect();
        compute_norm_stats(&train)
    }

    fn pool(&self, side: Side, stats: &NormStats) -> Result<EpisodePool> {
        let standardized = apply_standardization(&self.instances, stats)?;
        Ok(EpisodePool::from_split(&standardized, &self.split, side)?.with_norm_stats(stats.clone()))
    }
}

fn run_split(cfg: &RunConfig) -> Result<()> {
    let registry = match (&cfg.data.csv_path, &cfg.data.class_counts) {
        (Some(_), _) => load_dataset(cfg)?.registry,
        (None, Some(counts)) => {
            ClassRegistry::from_counts(counts.iter().map(|e| (e.name.clone(), e.count)))?
        }
        (None, None) => {
            return Err(Error::Config(
                "split needs data.csv_path or data.class_counts".into(),
            ))
        }
    };
    let split = split_by_scarcity(&registry, cfg.data.n_test_classes)?;
    let doc = split.to_document(&registry);
    doc.save(&cfg.io.split_path)?;
    println!(
        "split: {} meta-train classes, meta-test = [{}] -> {}",
        doc.meta_train.len(),
        doc.meta_test.join(", "),
        cfg.io.split_path.display()
    );
    Ok(())
}

fn train_and_save<S: TaskSampler>(
    sampler: &S,
    norm_stats: Option<NormStats>,
    cfg: &RunConfig,
) -> Result<MlpParameters> {
    let mut log = JsonLinesWriter::<TrainLogEntry>::create(&cfg.io.train_log_path)?;
    let out = meta_train_with(sampler, &cfg.episode, &cfg.maml, |entry| log.write(entry))?;
    let ckpt = Checkpoint {
        parameters: out.params,
        norm_stats,
        config: TrainingEcho {
            episode: cfg.episode,
            maml: cfg.maml.clone(),
        },
        iterations_completed: out.log.len(),
        seed: cfg.maml.seed,
    };
    save_checkpoint(&cfg.io.checkpoint_path, &ckpt)?;
    if let Some(last) = out.log.last() {
        println!(
            "meta-train: {} iterations, last query loss {:.6} -> {:.6} after adaptation",
            last.iteration, last.pre_adaptation_query_loss, last.post_adaptation_query_loss
        );
    } else {
        println!("meta-train: 0 iterations");
    }
    println!("checkpoint -> {}", cfg.io.checkpoint_path.display());
    Ok(ckpt.parameters)
}

fn run_meta_train(cfg: &RunConfig) -> Result<()> {
    let data = load_dataset(cfg)?;
    let stats = data.train_stats()?;
    let pool = data.pool(Side::MetaTrain, &stats)?;
    train_and_save(&pool, Some(stats), cfg).map(drop)
}

fn test_with_report<S: TaskSampler>(
    theta: &MlpParameters,
    sampler: &S,
    cfg: &RunConfig,
) -> Result<Vec<MetricsRecord>> {
    let mut report = JsonLinesWriter::<MetricsRecord>::create(&cfg.io.report_path)?;
    let records = meta_test_with(theta, sampler, &cfg.episode, &cfg.maml, |r| report.write(r))?;
    summarize("meta-test", &records, &cfg.io.report_path);
    Ok(records)
}

fn baseline_with_report<S: TaskSampler>(sampler: &S, cfg: &RunConfig) -> Result<Vec<MetricsRecord>> {
    let arch = architecture_for(sampler.input_dim(), &cfg.episode, &cfg.maml)?;
    let (steps, alpha, seed) = (cfg.maml.adaptation_steps, cfg.maml.alpha, cfg.maml.seed);
    let mut report = JsonLinesWriter::<MetricsRecord>::create(&cfg.io.baseline_report_path)?;
    let records = run_test_batches(
        sampler,
        &cfg.episode,
        &cfg.maml,
        |r| report.write(r),
        |ep| scratch_baseline(&arch, ep, steps, alpha, seed),
    )?;
    summarize("baseline", &records, &cfg.io.baseline_report_path);
    Ok(records)
}

fn summarize(label: &str, records: &[MetricsRecord], path: &Path) {
    if records.is_empty() {
        println!("{label}: no test batches -> {}", path.display());
        return;
    }
    let ones = vec![1; records.len()];
    let mean = |f: fn(&MetricsRecord) -> f64| {
        let values: Vec<f64> = records.iter().map(f).collect();
        weighted_average(&values, &ones).unwrap_or(f64::NAN)
    };
    println!(
        "{label}: {} batches, accuracy {:.4}, precision {:.4}, recall {:.4} -> {}",
        records.len(),
        mean(|r| r.accuracy),
        mean(|r| r.precision),
        mean(|r| r.recall),
        path.display()
    );
}

fn run_meta_test(cfg: &RunConfig) -> Result<()> {
    let ckpt = load_checkpoint(&cfg.io.checkpoint_path)?;
    let data = load_dataset(cfg)?;
    let arch = ckpt.architecture();
    if arch.output_dim() != cfg.episode.n_way {
        return Err(Error::Validation(format!(
            "checkpoint was trained for {}-way episodes but episode.n_way is {}",
            arch.output_dim(),
            cfg.episode.n_way
        )));
    }
    let stats = match &ckpt.norm_stats {
        Some(stats) => stats.clone(),
        None => NormStats::identity(arch.input_dim()),
    };
    let dim = data.instances.first().map_or(0, |i| i.features.len());
    if dim != arch.input_dim() {
        return Err(Error::Validation(format!(
            "checkpoint expects {} features but the data has {dim}",
            arch.input_dim()
        )));
    }
    let pool = data.pool(Side::MetaTest, &stats)?;
    test_with_report(&ckpt.parameters, &pool, cfg).map(drop)
}

fn run_baseline(cfg: &RunConfig) -> Result<()> {
    let data = load_dataset(cfg)?;
    let stats = data.train_stats()?;
    let pool = data.pool(Side::MetaTest, &stats)?;
    baseline_with_report(&pool, cfg).map(drop)
}

fn run_synth_bench(cfg: &RunConfig) -> Result<()> {
    let tasks = cfg.synthetic;
    let theta = train_and_save(&tasks, None, cfg)?;
    test_with_report(&theta, &tasks, cfg)?;
    baseline_with_report(&tasks, cfg)?;
    Ok(())
}

fn run_gradcheck(cfg: &RunConfig) -> Result<i32> {
    let report = run_suite(cfg.maml.seed)?;
    let line = |name: &str, value: f64, tol: f64| {
        let verdict = if value <= tol { "ok" } else { "FAIL" };
        println!("{name:<28} {value:.3e}  (tolerance {tol:.0e})  {verdict}");
    };
    line("gradient max rel-error", report.gradient_max_rel_error, gradcheck::GRADIENT_TOLERANCE);
    line("hvp max rel-error", report.hvp_max_rel_error, gradcheck::HVP_TOLERANCE);
    line(
        "hvp max symmetry error",
        report.hvp_max_symmetry_error,
        gradcheck::HVP_SYMMETRY_TOLERANCE,
    );
    line(
        "meta-gradient max rel-error",
        report.meta_gradient_max_rel_error,
        gradcheck::META_GRADIENT_TOLERANCE,
    );
    println!("elapsed {:.2?}", report.elapsed);
    Ok(if report.passed() { EXIT_OK } else { EXIT_CHECK_FAILED })
}
