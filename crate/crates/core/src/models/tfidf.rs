use std::collections::HashMap;

use super::Scorer;
use crate::error::Result;
use crate::text::Vocabulary;

/// Lexical baseline: `Σ_t tf_q(t) · tf_d(t) · idf(t)`, i.e. the row sum of
/// the one-hot interaction with `√idf` weighting on both sides.
#[derive(Debug, Clone)]
pub struct TfIdfScorer {
    vocab: Vocabulary,
}

impl TfIdfScorer {
    /// `vocab` should be built over the document (SKU) collection.
    pub fn new(vocab: Vocabulary) -> Self {
        TfIdfScorer { vocab }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }
}

pub fn tfidf_score<S: AsRef<str>>(query: &[S], doc: &[S], vocab: &Vocabulary) -> f64 {
    let mut q_tf: HashMap<&str, usize> = HashMap::new();
    for t in query {
        *q_tf.entry(t.as_ref()).or_default() += 1;
    }
    let mut d_tf: HashMap<&str, usize> = HashMap::with_capacity(q_tf.len());
    for t in doc {
        if q_tf.contains_key(t.as_ref()) {
            *d_tf.entry(t.as_ref()).or_default() += 1;
        }
    }
    // sorted so the float sum is order-independent
    let mut terms: Vec<(&str, usize)> = d_tf.into_iter().collect();
    terms.sort_unstable();
    terms
        .into_iter()
        .map(|(t, df)| (q_tf[t] * df) as f64 * vocab.idf(t))
        .sum()
}

impl Scorer for TfIdfScorer {
    fn score(&self, query: &[String], doc: &[String]) -> Result<f64> {
        Ok(tfidf_score(query, doc, &self.vocab))
    }
}
