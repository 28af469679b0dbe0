//! Embedding-guided curation of synthetic tabular regression tasks.
//!
//! The crate is organized bottom-up:
//!
//! - [`tabular`]: ingestion, preprocessing, control data and the canonical dataset file.
//! - [`procgen`]: structural-causal-model task generator.
//! - [`pfn`]: a miniature prior-data-fitted network with hand-written backpropagation,
//!   dataset embeddings and (continued) pre-training.
//! - [`curation`]: gradient-boosted trees over embeddings, distinguishability,
//!   hyperparameter search and top-k selection.
//! - [`eval`]: learning-curve sweeps, data-efficiency metrics and win counts.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the `parallel`
//! feature is enabled and runs sequentially otherwise. Results never depend on
//! the thread count.

pub mod curation;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod par;
pub mod pfn;
pub mod procgen;
pub mod rng;
pub mod tabular;
pub mod tree;

pub use error::{Error, Result};
