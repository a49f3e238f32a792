use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::catalog::Catalog;
use crate::text::Vocabulary;

type Ranking = Arc<Vec<usize>>;

/// Produces the ranked SKU positions shown for a query.
pub trait Retriever: Sync {
    fn retrieve(&self, query: &[String], k: usize) -> Arc<Vec<usize>>;
}

/// tf–idf ranking over the catalog through an inverted index. Only SKUs
/// sharing a weighted term with the query are returned; ties go to the
/// lower catalog position. Results are memoized per query.
#[derive(Debug)]
pub struct TfIdfRetriever {
    vocab: Vocabulary,
    postings: HashMap<String, Vec<(usize, f64)>>,
    n_docs: usize,
    cache: Mutex<HashMap<(Vec<String>, usize), Ranking>>,
}

impl TfIdfRetriever {
    pub fn new(catalog: &Catalog) -> Self {
        let texts: Vec<Vec<String>> = catalog.skus().iter().map(|s| s.text()).collect();
        let vocab = if texts.is_empty() {
            Vocabulary::build(&[Vec::<String>::new()]).expect("one document")
        } else {
            Vocabulary::build(&texts).expect("non-empty catalog")
        };
        let mut postings: HashMap<String, Vec<(usize, f64)>> = HashMap::new();
        for (doc, text) in texts.iter().enumerate() {
            let mut tf: HashMap<&str, f64> = HashMap::new();
            for t in text {
                *tf.entry(t).or_default() += 1.0;
            }
            let mut terms: Vec<_> = tf.into_iter().collect();
            terms.sort_unstable_by(|a, b| a.0.cmp(b.0));
            for (t, f) in terms {
                postings.entry(t.to_string()).or_default().push((doc, f));
            }
        }
        TfIdfRetriever {
            vocab,
            postings,
            n_docs: texts.len(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn rank(&self, query: &[String], k: usize) -> Vec<usize> {
        let mut q_tf: Vec<(&str, f64)> = Vec::new();
        for t in query {
            match q_tf.iter_mut().find(|(s, _)| *s == t) {
                Some(e) => e.1 += 1.0,
                None => q_tf.push((t, 1.0)),
            }
        }
        q_tf.sort_unstable_by(|a, b| a.0.cmp(b.0));
        let mut scores = vec![0.0; self.n_docs];
        for (t, qf) in q_tf {
            let idf = self.vocab.idf(t);
            if idf <= 0.0 {
                continue;
            }
            for &(doc, df) in self.postings.get(t).map_or(&[][..], Vec::as_slice) {
                scores[doc] += qf * df * idf;
            }
        }
        let mut hits: Vec<usize> = (0..self.n_docs).filter(|&d| scores[d] > 0.0).collect();
        hits.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        hits.truncate(k);
        hits
    }
}

impl Retriever for TfIdfRetriever {
    fn retrieve(&self, query: &[String], k: usize) -> Arc<Vec<usize>> {
        let key = (query.to_vec(), k);
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Arc::clone(hit);
        }
        let ranked = Arc::new(self.rank(query, k));
        self.cache
            .lock()
            .expect("cache lock")
            .insert(key, Arc::clone(&ranked));
        ranked
    }
}
