//! Few-shot meta-learning for refactoring-opportunity classification.
//!
//! A small multilayer perceptron is meta-trained with MAML on N-way K-shot
//! episodes drawn from data-rich refactoring classes, then adapted with one
//! or a few gradient steps to episodes drawn from classes it never saw.
//!
//! - [`nn`]: the network, its loss, gradients and Hessian-vector products.
//! - [`gradcheck`]: finite-difference oracles for the derivatives above.
//! - [`episodes`]: CSV ingestion, scarcity split, standardization and
//!   episode sampling, plus a synthetic task generator.
//! - [`maml`]: inner adaptation, first-order and exact meta-gradients,
//!   meta-train / meta-test loops and checkpoints.
//! - [`eval`]: accuracy, macro precision/recall, aggregation and a
//!   train-from-scratch baseline.
//! - [`cli`]: the configuration-driven command runner behind the
//!   `episodic-maml` binary.
//!
//! Runnable walkthroughs live in `crates/core/examples/`.

pub mod cli;
pub mod episodes;
mod error;
pub mod eval;
pub mod gradcheck;
pub mod maml;
pub mod nn;

pub use error::{Error, Result};
