//! From labeled tabular data to few-shot episodes.
//!
//! The pipeline is: [`ingest_csv`] → [`split_by_scarcity`] (classes, not
//! instances, are partitioned) → [`compute_norm_stats`] on the meta-train
//! side → [`apply_standardization`] on both sides → one [`EpisodePool`] per
//! side → [`sample_episode`] / [`sample_episode_batch`].

mod dataset;
mod norm;
mod sampling;
mod split;
mod synthetic;

pub use dataset::{ingest_csv, ClassEntry, ClassId, ClassRegistry, Instance, REFACTORING_TYPE_COUNTS};
pub use norm::{apply_standardization, compute_norm_stats, NormStats, STD_EPSILON};
pub use sampling::{
    sample_episode, sample_episode_batch, Episode, EpisodeConfig, EpisodePool, InstanceRef,
    TaskSampler,
};
pub use split::{split_by_scarcity, MetaSplit, Side, SplitDocument, TIE_RULE_LEXICOGRAPHIC};
pub use synthetic::{synthetic_episode, SyntheticTaskConfig, SyntheticTasks};
