//! Model-agnostic meta-learning over episodes.
//!
//! Meta-train: starting from a random θ, each iteration samples a batch of
//! episodes, adapts a copy of θ to every support set with plain gradient
//! descent, and moves θ against the mean query-loss gradient of the adapted
//! copies. Meta-test: θ is copied, adapted to each unseen episode's support
//! set and scored on its query set; θ itself never changes.

mod checkpoint;
mod config;
mod engine;
mod parallel;

pub use checkpoint::{
    checkpoint_from_json, checkpoint_to_json, load_checkpoint, save_checkpoint, Checkpoint,
    TrainingEcho, CHECKPOINT_FORMAT_VERSION,
};
pub use config::{GradMode, MamlConfig};
pub use engine::{
    adapt_and_score, architecture_for, inner_adapt, meta_gradient, meta_gradient_with_losses,
    meta_test, meta_test_with, meta_train, meta_train_with, run_test_batches, score_batch,
    test_rng, train_rng, MetaStep, MetaTrainOutput, TrainLogEntry,
};
pub use parallel::THREADS_ENV;
