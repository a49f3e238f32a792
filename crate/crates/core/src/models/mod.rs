//! Query–SKU scoring functions `f(q, d)`.
//!
//! - [`TfIdfScorer`]: lexical baseline.
//! - kernel pooling: `mlp₁ ∘ φ` over the interaction matrix.
//! - siamese / dssm_like: shared encoder `g`, score `⟨g(q), g(d)⟩`.
//! - hybrid_local: `mlp ∘ cnn` over the interaction matrix.
//!
//! Every trainable model embeds tokens through one table and normalizes the
//! gathered rows, so interaction entries are cosines.

mod config;
mod kernel;
mod neural;
mod tfidf;


pub use config::{Architecture, Head, ModelConfig};
pub use kernel::{
    interaction_matrix, kernel_features, kernel_features_var, InteractionMatrix, KernelBank,
};
pub use neural::{
    distributed_encode, distributed_score, hybrid_local_score, kernel_pooling_score, Input,
    NeuralModel, Prepared, EMBEDDING,
};
pub use tfidf::{tfidf_score, TfIdfScorer};

use crate::error::Result;

/// Uniform scoring contract over normalized token sequences. Pure given
/// fixed parameters, so one scorer can serve many threads.
pub trait Scorer: Sync {
    fn score(&self, query: &[String], doc: &[String]) -> Result<f64>;
}
