//! The dataset workflow on a generated CSV: ingest, split by scarcity,
//! standardize with meta-train statistics, meta-train, checkpoint,
//! reload and meta-test on the held-out classes.

use std::fmt::Write as _;

use episodic_maml::episodes::{
    apply_standardization, compute_norm_stats, ingest_csv, split_by_scarcity, EpisodeConfig,
    EpisodePool, Instance, Side,
};
use episodic_maml::maml::{
    load_checkpoint, meta_test, meta_train, save_checkpoint, Checkpoint, MamlConfig, TrainingEcho,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn write_csv(path: &std::path::Path) {
    let classes = [
        ("rename method", 400),
        ("extract method", 300),
        ("move class", 200),
        ("inline method", 150),
        ("rename class", 60),
        ("extract subclass", 40),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut text = String::from("refactoring,loc,cbo,wmc,rfc\n");
    for &(name, n) in &classes {
        let centre: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..20.0)).collect();
        for _ in 0..n {
            let row: Vec<String> = centre
                .iter()
                .map(|m| format!("{:.2}", m + rng.random_range(-3.0..3.0)))
                .collect();
            writeln!(text, "{name},{}", row.join(",")).unwrap();
        }
    }
    std::fs::write(path, text).unwrap();
}

fn main() -> episodic_maml::Result<()> {
    let dir = std::env::temp_dir().join("episodic-maml-csv-pipeline");
    std::fs::create_dir_all(&dir).unwrap();
    let csv = dir.join("metrics.csv");
    write_csv(&csv);

    let (instances, registry) = ingest_csv(&csv, "refactoring", &[])?;
    let split = split_by_scarcity(&registry, 2)?;
    let doc = split.to_document(&registry);
    println!("meta-train {:?}\nmeta-test  {:?}", doc.meta_train, doc.meta_test);

    let train: Vec<Instance> = instances
        .iter()
        .filter(|i| split.meta_train().contains(&i.class_id))
        .cloned()
        .collect();
    let stats = compute_norm_stats(&train)?;
    let scaled = apply_standardization(&instances, &stats)?;
    let train_pool = EpisodePool::from_split(&scaled, &split, Side::MetaTrain)?;
    let test_pool = EpisodePool::from_split(&scaled, &split, Side::MetaTest)?;

    let episode = EpisodeConfig::new(2, 5, 15)?;
    let maml = MamlConfig {
        alpha: 0.1,
        beta: 0.05,
        meta_iterations: 200,
        adaptation_steps: 5,
        meta_batch_size: 10,
        hidden_widths: vec![32, 32],
        test_batches: 5,
        ..MamlConfig::default()
    };
    let trained = meta_train(&train_pool, &episode, &maml)?;
    let path = dir.join("checkpoint.json");
    save_checkpoint(
        &path,
        &Checkpoint {
            parameters: trained.params,
            norm_stats: Some(stats),
            config: TrainingEcho { episode, maml: maml.clone() },
            iterations_completed: trained.log.len(),
            seed: maml.seed,
        },
    )?;

    let restored = load_checkpoint(&path)?;
    for r in meta_test(&restored.parameters, &test_pool, &episode, &maml)? {
        println!(
            "batch {}: accuracy {:.3} precision {:.3} recall {:.3} loss {:.3}",
            r.batch_index, r.accuracy, r.precision, r.recall, r.loss
        );
    }
    println!("checkpoint written to {}", path.display());
    Ok(())
}
