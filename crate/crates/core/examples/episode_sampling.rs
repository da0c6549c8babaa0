//! Draws N-way K-shot episodes from a small labelled pool and shows how
//! global classes map onto local labels.

use episodic_maml::episodes::{sample_episode, ClassId, EpisodeConfig, EpisodePool, Instance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> episodic_maml::Result<()> {
    let instances: Vec<Instance> = (0..6)
        .flat_map(|c| (0..8).map(move |i| Instance::new(vec![c as f64, i as f64], ClassId(c))))
        .collect();
    let pool = EpisodePool::new(&instances)?;
    let cfg = EpisodeConfig::new(3, 2, 3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(42);

    for n in 0..3 {
        let ep = sample_episode(&pool, &cfg, &mut rng)?;
        println!("episode {n}: classes {:?}", ep.class_map);
        for (row, label) in ep.support.rows().zip(ep.support.labels()) {
            println!("  support label {label}  features {row:?}");
        }
        let query: Vec<usize> = ep.query_refs.iter().map(|r| r.index).collect();
        println!("  query instance indices {query:?}");
    }

    let too_many = EpisodeConfig::new(3, 5, 5)?;
    if let Err(err) = sample_episode(&pool, &too_many, &mut rng) {
        println!("5+5 per class from 8 instances: {err}");
    }
    Ok(())
}
