//! Complexity scoring for dialogue corpora and an adaptive multi-curricula
//! training scheduler.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`corpus`] loads query/response pairs and the statistics every scorer shares.
//! 2. [`attributes`] scores each sample on five complexity attributes;
//!    [`analysis`] summarizes their distributions and pairwise Kendall τ.
//! 3. [`curriculum`] turns each attribute into an easy-to-hard ordering with
//!    progress-gated sampling.
//! 4. [`scheduler`] trains a [`learner::Learner`] while a softmax policy, updated
//!    with REINFORCE on validation-metric improvements, picks the curriculum for
//!    every batch.

pub mod analysis;
pub mod attributes;
pub mod cli;
pub mod corpus;
pub mod curriculum;
pub mod embeddings;
pub mod error;
pub mod learner;
pub mod metrics;
pub mod scheduler;

pub use attributes::{Attribute, AttributeScores};
pub use corpus::{load_corpus, Corpus, DialogueSample};
pub use embeddings::EmbeddingTable;
pub use error::{Error, Result};
pub use learner::{Learner, SimConfig, SimulatedLearner};
pub use metrics::MetricVector;
pub use scheduler::{train_loop, Mode, RunReport, TrainConfig};
