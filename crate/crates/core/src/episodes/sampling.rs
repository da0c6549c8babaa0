//! N-way K-shot episode construction.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ClassId, Instance, MetaSplit, NormStats, Side};
use crate::nn::LabeledBatch;
use crate::{Error, Result};

/// Shape of an episode: `n_way` classes, `k_shot` support and `q_query`
/// query instances per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            n_way: 2,
            k_shot: 5,
            q_query: 15,
        }
    }
}

impl EpisodeConfig {
    pub fn new(n_way: usize, k_shot: usize, q_query: usize) -> Result<Self> {
        let cfg = Self {
            n_way,
            k_shot,
            q_query,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_way < 2 {
            return Err(Error::Config(format!("n_way must be >= 2, got {}", self.n_way)));
        }
        if self.k_shot < 1 {
            return Err(Error::Config("k_shot must be >= 1".into()));
        }
        if self.q_query < 1 {
            return Err(Error::Config("q_query must be >= 1".into()));
        }
        if self.q_query <= self.k_shot {
            log::warn!(
                "q_query ({}) is not larger than k_shot ({}); query sets are usually the larger split",
                self.q_query,
                self.k_shot
            );
        }
        Ok(())
    }

    pub fn per_class(&self) -> usize {
        self.k_shot + self.q_query
    }
}

/// Where an episode row came from: a class and a position within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstanceRef {
    pub class_id: ClassId,
    pub index: usize,
}

/// One few-shot task. Local labels `0..n_way` index `class_map`.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub support: LabeledBatch,
    pub query: LabeledBatch,
    pub class_map: Vec<ClassId>,
    pub support_refs: Vec<InstanceRef>,
    pub query_refs: Vec<InstanceRef>,
}

impl Episode {
    /// Wraps two ready-made batches. Rows are given distinct synthetic
    /// references: support rows first, then query rows.
    pub fn from_batches(support: LabeledBatch, query: LabeledBatch, class_map: Vec<usize>) -> Result<Self> {
        if support.input_dim() != query.input_dim() {
            return Err(Error::Shape("support and query widths differ".into()));
        }
        let n = class_map.len();
        if let Some(&y) = support.labels().iter().chain(query.labels()).find(|&&y| y >= n) {
            return Err(Error::Argument(format!("label {y} out of range for {n} classes")));
        }
        let class_map: Vec<ClassId> = class_map.into_iter().map(ClassId).collect();
        let refs = |batch: &LabeledBatch, offset: usize| {
            batch
                .labels()
                .iter()
                .enumerate()
                .map(|(i, &y)| InstanceRef {
                    class_id: class_map[y],
                    index: offset + i,
                })
                .collect::<Vec<_>>()
        };
        let support_refs = refs(&support, 0);
        let query_refs = refs(&query, support.len());
        Ok(Self {
            support,
            query,
            class_map,
            support_refs,
            query_refs,
        })
    }

    pub fn n_way(&self) -> usize {
        self.class_map.len()
    }

    pub fn input_dim(&self) -> usize {
        self.support.input_dim()
    }
}

/// Anything that can produce episodes of a given shape.
pub trait TaskSampler {
    fn input_dim(&self) -> usize;

    fn sample_episode<R: Rng + ?Sized>(&self, cfg: &EpisodeConfig, rng: &mut R) -> Result<Episode>;

    /// `m` episodes drawn one after another from the same `rng` stream.
    fn sample_batch<R: Rng + ?Sized>(
        &self,
        cfg: &EpisodeConfig,
        m: usize,
        rng: &mut R,
    ) -> Result<Vec<Episode>> {
        (0..m).map(|_| self.sample_episode(cfg, rng)).collect()
    }
}

#[derive(Debug, Clone)]
struct PoolClass {
    id: ClassId,
    /// Row-major `(count, dim)`.
    rows: Vec<f64>,
}

/// Instances of one side of a meta-split, grouped by class.
#[derive(Debug, Clone)]
pub struct EpisodePool {
    dim: usize,
    classes: Vec<PoolClass>,
    norm_stats: Option<NormStats>,
}

impl EpisodePool {
    /// Pools every instance. Classes are ordered by id.
    pub fn new(instances: &[Instance]) -> Result<Self> {
        let dim = instances
            .first()
            .map(|i| i.features.len())
            .ok_or_else(|| Error::Argument("episode pool needs at least one instance".into()))?;
        let mut classes: Vec<PoolClass> = Vec::new();
        let mut ids: Vec<ClassId> = instances.iter().map(|i| i.class_id).collect();
        ids.sort_unstable();
        ids.dedup();
        for id in ids {
            classes.push(PoolClass {
                id,
                rows: Vec::new(),
            });
        }
        for (n, inst) in instances.iter().enumerate() {
            if inst.features.len() != dim {
                return Err(Error::Shape(format!(
                    "instance {n} has {} features, expected {dim}",
                    inst.features.len()
                )));
            }
            if let Some(bad) = inst.features.iter().find(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("instance {n} has non-finite feature {bad}")));
            }
            let slot = classes
                .binary_search_by_key(&inst.class_id, |c| c.id)
                .expect("class collected above");
            classes[slot].rows.extend_from_slice(&inst.features);
        }
        Ok(Self {
            dim,
            classes,
            norm_stats: None,
        })
    }

    /// Pools only the instances whose class is in `allowed`.
    pub fn restricted_to(instances: &[Instance], allowed: &BTreeSet<ClassId>) -> Result<Self> {
        let kept: Vec<Instance> = instances
            .iter()
            .filter(|i| allowed.contains(&i.class_id))
            .cloned()
            .collect();
        Self::new(&kept)
    }

    pub fn from_split(instances: &[Instance], split: &MetaSplit, side: Side) -> Result<Self> {
        Self::restricted_to(instances, split.classes(side))
    }

    /// Records the standardization the pooled features went through.
    pub fn with_norm_stats(mut self, stats: NormStats) -> Self {
        self.norm_stats = Some(stats);
        self
    }

    pub fn norm_stats(&self) -> Option<&NormStats> {
        self.norm_stats.as_ref()
    }

    pub fn class_ids(&self) -> Vec<ClassId> {
        self.classes.iter().map(|c| c.id).collect()
    }

    pub fn class_size(&self, id: ClassId) -> Option<usize> {
        self.classes
            .iter()
            .find(|c| c.id == id)
            .map(|c| c.rows.len() / self.dim)
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    fn check_capacity(&self, cfg: &EpisodeConfig) -> Result<()> {
        if self.classes.len() < cfg.n_way {
            return Err(Error::Sampling(format!(
                "pool has {} classes but {}-way episodes were requested",
                self.classes.len(),
                cfg.n_way
            )));
        }
        let need = cfg.per_class();
        for class in &self.classes {
            let have = class.rows.len() / self.dim;
            if have < need {
                return Err(Error::Sampling(format!(
                    "class {} has {have} instances; {}-shot {}-query episodes need {need}",
                    class.id, cfg.k_shot, cfg.q_query
                )));
            }
        }
        Ok(())
    }
}

impl TaskSampler for EpisodePool {
    fn input_dim(&self) -> usize {
        self.dim
    }

    /// Picks `n_way` classes uniformly without replacement; from each picks
    /// `k_shot + q_query` distinct instances, the first `k_shot` for support
    /// and the rest for query. Local label `c` is the `c`-th class drawn.
    fn sample_episode<R: Rng + ?Sized>(&self, cfg: &EpisodeConfig, rng: &mut R) -> Result<Episode> {
        self.check_capacity(cfg)?;
        let dim = self.dim;
        let (n, k, q) = (cfg.n_way, cfg.k_shot, cfg.q_query);
        let mut support = Vec::with_capacity(n * k * dim);
        let mut support_labels = Vec::with_capacity(n * k);
        let mut support_refs = Vec::with_capacity(n * k);
        let mut query = Vec::with_capacity(n * q * dim);
        let mut query_labels = Vec::with_capacity(n * q);
        let mut query_refs = Vec::with_capacity(n * q);
        let mut class_map = Vec::with_capacity(n);

        for (local, slot) in index::sample(rng, self.classes.len(), n).into_iter().enumerate() {
            let class = &self.classes[slot];
            class_map.push(class.id);
            let size = class.rows.len() / dim;
            for (j, row) in index::sample(rng, size, k + q).into_iter().enumerate() {
                let features = &class.rows[row * dim..(row + 1) * dim];
                let r = InstanceRef {
                    class_id: class.id,
                    index: row,
                };
                if j < k {
                    support.extend_from_slice(features);
                    support_labels.push(local);
                    support_refs.push(r);
                } else {
                    query.extend_from_slice(features);
                    query_labels.push(local);
                    query_refs.push(r);
                }
            }
        }
        Ok(Episode {
            support: LabeledBatch::new(dim, support, support_labels)?,
            query: LabeledBatch::new(dim, query, query_labels)?,
            class_map,
            support_refs,
            query_refs,
        })
    }
}

pub fn sample_episode<R: Rng + ?Sized>(
    pool: &EpisodePool,
    cfg: &EpisodeConfig,
    rng: &mut R,
) -> Result<Episode> {
    pool.sample_episode(cfg, rng)
}

pub fn sample_episode_batch<R: Rng + ?Sized>(
    pool: &EpisodePool,
    cfg: &EpisodeConfig,
    m: usize,
    rng: &mut R,
) -> Result<Vec<Episode>> {
    pool.sample_batch(cfg, m, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pool(sizes: &[usize]) -> EpisodePool {
        let mut instances = Vec::new();
        for (c, &size) in sizes.iter().enumerate() {
            for i in 0..size {
                instances.push(Instance::new(vec![c as f64, i as f64], ClassId(c)));
            }
        }
        EpisodePool::new(&instances).unwrap()
    }

    #[test]
    fn two_way_five_shot_sizes() {
        let p = pool(&[30, 30, 30]);
        let cfg = EpisodeConfig::new(2, 5, 15).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ep = sample_episode(&p, &cfg, &mut rng).unwrap();
        assert_eq!(ep.support.len(), 10);
        assert_eq!(ep.query.len(), 30);
        let s: BTreeSet<_> = ep.support_refs.iter().collect();
        assert!(ep.query_refs.iter().all(|r| !s.contains(r)));
    }

    #[test]
    fn five_way_one_shot_sizes() {
        let p = pool(&[4; 6]);
        let cfg = EpisodeConfig::new(5, 1, 3).unwrap();
        let ep = sample_episode(&p, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(ep.support.len(), 5);
        assert_eq!(ep.query.len(), 15);
    }

    #[test]
    fn rows_carry_their_source_features() {
        let p = pool(&[25, 25, 25]);
        let cfg = EpisodeConfig::default();
        let ep = sample_episode(&p, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for (row, r) in ep.support.rows().zip(&ep.support_refs) {
            assert_eq!(row, &[r.class_id.0 as f64, r.index as f64]);
        }
        for (&y, r) in ep.query.labels().iter().zip(&ep.query_refs) {
            assert_eq!(ep.class_map[y], r.class_id);
        }
    }

    #[test]
    fn deficient_class_is_named() {
        let p = pool(&[20, 19, 20]);
        let cfg = EpisodeConfig::new(2, 5, 15).unwrap();
        match sample_episode(&p, &cfg, &mut ChaCha8Rng::seed_from_u64(0)) {
            Err(Error::Sampling(msg)) => assert!(msg.contains("#1"), "{msg}"),
            other => panic!("expected sampling error, got {other:?}"),
        }
        let few = pool(&[20]);
        assert!(matches!(
            sample_episode(&few, &cfg, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::Sampling(_))
        ));
    }

    #[test]
    fn batches_are_seeded() {
        let p = pool(&[20; 4]);
        let cfg = EpisodeConfig::new(2, 3, 5).unwrap();
        let a = sample_episode_batch(&p, &cfg, 25, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_episode_batch(&p, &cfg, 25, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.len(), 25);
        assert_eq!(a, b);
        let none = sample_episode_batch(&p, &cfg, 0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(EpisodeConfig::new(1, 5, 15).is_err());
        assert!(EpisodeConfig::new(2, 0, 15).is_err());
        assert!(EpisodeConfig::new(2, 5, 0).is_err());
        // Q <= K only warns
        assert!(EpisodeConfig::new(2, 5, 5).is_ok());
    }
}
