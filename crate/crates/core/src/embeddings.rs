//! Word-embedding tables, padded sequence embedding and a skip-gram
//! (negative sampling) pre-trainer.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Default embedding dimension for full-size runs.
pub const DEFAULT_DIM: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Tensor,
    trainable: bool,
}

impl EmbeddingTable {
    /// `vectors` must be `tokens.len() × dim`; tokens must be unique.
    pub fn new(tokens: Vec<String>, vectors: Tensor) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Empty("embedding vocabulary"));
        }
        if !vectors.is_matrix() || vectors.rows() != tokens.len() {
            return Err(Error::shape(
                "embedding_table",
                &[tokens.len()],
                vectors.shape(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate token {t:?}")));
            }
        }
        Ok(EmbeddingTable {
            tokens,
            index,
            vectors,
            trainable: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.id(token).map(|i| self.vectors.row(i))
    }

    pub fn vectors(&self) -> &Tensor {
        &self.vectors
    }

    pub fn into_vectors(self) -> Tensor {
        self.vectors
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        self.trainable = trainable;
    }

    pub fn with_vectors(&self, vectors: Tensor) -> Result<Self> {
        let mut t = EmbeddingTable::new(self.tokens.clone(), vectors)?;
        t.trainable = self.trainable;
        Ok(t)
    }

    /// Cosine similarity of two tokens; `None` if either is unknown, zero
    /// if either vector is zero.
    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        Some(cosine(self.vector(a)?, self.vector(b)?))
    }

    /// Text format: one `token v1 v2 ... vk` line per token.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for (i, token) in self.tokens.iter().enumerate() {
            out.extend_from_slice(token.as_bytes());
            for v in self.vectors.row(i) {
                write!(out, " {v}")?;
            }
            out.push(b'\n');
        }
        fs::write(path, out).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut data = Vec::new();
        let mut dim = None;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let token = fields.next().expect("non-empty line has a field");
            let start = data.len();
            for f in fields {
                let v: f64 = f
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("unparsable number {f:?}")))?;
                if !v.is_finite() {
                    return Err(Error::parse(line_no, format!("non-finite value {f:?}")));
                }
                data.push(v);
            }
            let k = data.len() - start;
            match dim {
                None if k == 0 => return Err(Error::parse(line_no, "token without a vector")),
                None => dim = Some(k),
                Some(d) if d != k => {
                    return Err(Error::parse(
                        line_no,
                        format!("expected {d} values, found {k}"),
                    ))
                }
                Some(_) => {}
            }
            tokens.push(token.to_string());
        }
        let dim = dim.ok_or(Error::Empty("vector file"))?;
        let vectors = Tensor::new(vec![tokens.len(), dim], data)?;
        EmbeddingTable::new(tokens, vectors)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales every nonzero vector to unit 2-norm.
pub fn unit_normalize(table: &EmbeddingTable) -> EmbeddingTable {
    let mut vectors = table.vectors.clone();
    for i in 0..vectors.rows() {
        let row = vectors.row_mut(i);
        let n = norm(row);
        if n > 0.0 {
            row.iter_mut().for_each(|v| *v /= n);
        }
    }
    EmbeddingTable {
        vectors,
        ..table.clone()
    }
}

/// Fixed-length embedding of a token sequence: `N × dim`, row-per-token.
/// Rows past `n_real` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalEmbedding {
    pub matrix: Tensor,
    pub n_real: usize,
}

/// Row ids for the first `n` tokens (`None` for out-of-vocabulary tokens and
/// padding) and the number of real positions, `min(tokens.len(), n)`.
pub fn sequence_ids<S: AsRef<str>>(
    tokens: &[S],
    n: usize,
    table: &EmbeddingTable,
) -> (Vec<Option<usize>>, usize) {
    let n_real = tokens.len().min(n);
    let mut ids: Vec<Option<usize>> = tokens[..n_real]
        .iter()
        .map(|t| table.id(t.as_ref()))
        .collect();
    ids.resize(n, None);
    (ids, n_real)
}

pub fn embed_sequence<S: AsRef<str>>(
    tokens: &[S],
    n: usize,
    table: &EmbeddingTable,
) -> Result<LocalEmbedding> {
    if n == 0 {
        return Err(Error::invalid("sequence length must be at least 1"));
    }
    let (ids, n_real) = sequence_ids(tokens, n, table);
    let k = table.dim();
    let mut data = vec![0.0; n * k];
    for (i, id) in ids.iter().enumerate() {
        if let Some(id) = id {
            data[i * k..(i + 1) * k].copy_from_slice(table.vectors.row(*id));
        }
    }
    Ok(LocalEmbedding {
        matrix: Tensor::new(vec![n, k], data)?,
        n_real,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: DEFAULT_DIM,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

/// Trains skip-gram with negative sampling and returns the input vectors.
///
/// Noise words are drawn from the unigram distribution raised to 0.75; the
/// learning rate decays linearly to 1e-4 of its initial value. The run is
/// single-threaded and fully determined by `config.seed`.
pub fn train_skipgram(corpus: &[Vec<String>], config: &SkipGramConfig) -> Result<EmbeddingTable> {
    if config.dim == 0 || config.window == 0 || config.epochs == 0 {
        return Err(Error::invalid("dim, window and epochs must be positive"));
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut counts: Vec<u64> = Vec::new();
    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| {
            s.iter()
                .map(|t| {
                    let id = *index.entry(t.as_str()).or_insert_with(|| {
                        tokens.push(t.clone());
                        counts.push(0);
                        tokens.len() - 1
                    });
                    counts[id] += 1;
                    id
                })
                .collect()
        })
        .collect();
    if tokens.len() < 2 {
        return Err(Error::invalid(format!(
            "skip-gram needs at least 2 distinct tokens, corpus has {}",
            tokens.len()
        )));
    }

    let (v, k) = (tokens.len(), config.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut input: Vec<f64> = (0..v * k)
        .map(|_| (rng.gen::<f64>() - 0.5) / k as f64)
        .collect();
    let mut output = vec![0.0; v * k];

    let mut cumulative = Vec::with_capacity(v);
    let mut acc = 0.0;
    for &c in &counts {
        acc += (c as f64).powf(0.75);
        cumulative.push(acc);
    }
    let sample_noise = |rng: &mut ChaCha8Rng| {
        let x = rng.gen::<f64>() * acc;
        cumulative.partition_point(|&c| c <= x).min(v - 1)
    };

    let total_steps = (config.epochs * sentences.iter().map(Vec::len).sum::<usize>()).max(1);
    let mut step = 0usize;
    let mut grad_in = vec![0.0; k];
    for _ in 0..config.epochs {
        for sentence in &sentences {
            for (pos, &center) in sentence.iter().enumerate() {
                let lr = config.learning_rate * (1.0 - step as f64 / total_steps as f64).max(1e-4);
                step += 1;
                let reach = rng.gen_range(1..=config.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(sentence.len() - 1);
                for (ctx_pos, &context) in sentence.iter().enumerate().take(hi + 1).skip(lo) {
                    if ctx_pos == pos {
                        continue;
                    }
                    grad_in.iter_mut().for_each(|g| *g = 0.0);
                    for n in 0..=config.negatives {
                        let (target, label) = if n == 0 {
                            (context, 1.0)
                        } else {
                            let t = sample_noise(&mut rng);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let vin = &input[center * k..(center + 1) * k];
                        let vout = &mut output[target * k..(target + 1) * k];
                        let dot: f64 = vin.iter().zip(vout.iter()).map(|(a, b)| a * b).sum();
                        let g = lr * (label - sigmoid(dot));
                        for j in 0..k {
                            grad_in[j] += g * vout[j];
                            vout[j] += g * vin[j];
                        }
                    }
                    for (w, g) in input[center * k..(center + 1) * k].iter_mut().zip(&grad_in) {
                        *w += g;
                    }
                }
            }
        }
    }
    EmbeddingTable::new(tokens, Tensor::new(vec![v, k], input)?)
}

fn sigmoid(x: f64) -> f64 {
    if x > 20.0 {
        1.0
    } else if x < -20.0 {
        0.0
    } else {
        1.0 / (1.0 + (-x).exp())
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn table(rows: &[(&str, &[f64])]) -> EmbeddingTable {
        let tokens = rows.iter().map(|(t, _)| t.to_string()).collect();
        let vectors =
            Tensor::from_rows(&rows.iter().map(|(_, v)| v.to_vec()).collect::<Vec<_>>()).unwrap();
        EmbeddingTable::new(tokens, vectors).unwrap()
    }

    #[test]
    fn empty_sequence_is_all_padding() {
        let t = table(&[("a", &[1.0, 0.0])]);
        let e = embed_sequence::<&str>(&[], 3, &t).unwrap();
        assert_eq!(e.n_real, 0);
        assert_eq!(e.matrix.shape(), &[3, 2]);
        assert!(e.matrix.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn long_sequence_is_truncated() {
        let t = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0]), ("c", &[2.0, 2.0])]);
        let e = embed_sequence(&["a", "b", "c", "a", "b"], 3, &t).unwrap();
        assert_eq!(e.n_real, 3);
        assert_eq!(e.matrix.data(), &[1.0, 0.0, 0.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn short_sequence_is_padded_and_oov_is_zero() {
        let t = table(&[("a", &[1.0, 0.5])]);
        let e = embed_sequence(&["a"], 3, &t).unwrap();
        assert_eq!(e.n_real, 1);
        assert_eq!(e.matrix.data(), &[1.0, 0.5, 0.0, 0.0, 0.0, 0.0]);
        let e = embed_sequence(&["zzz", "a"], 3, &t).unwrap();
        assert_eq!(e.n_real, 2);
        assert_eq!(e.matrix.data(), &[0.0, 0.0, 1.0, 0.5, 0.0, 0.0]);
        assert!(embed_sequence(&["a"], 0, &t).is_err());
    }

    #[test]
    fn unit_normalize_examples() {
        let t = unit_normalize(&table(&[("a", &[3.0, 4.0]), ("z", &[0.0, 0.0])]));
        assert!((t.vector("a").unwrap()[0] - 0.6).abs() < 1e-15);
        assert!((t.vector("a").unwrap()[1] - 0.8).abs() < 1e-15);
        assert_eq!(t.vector("z").unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn skipgram_learns_cooccurrence() {
        let mut corpus = Vec::new();
        for i in 0..300 {
            let f = format!("f{}", i % 7);
            let g = format!("g{}", i % 5);
            corpus.push(vec!["x".into(), "y".into(), f.clone(), "p".into()]);
            corpus.push(vec![f, "y".into(), "x".into(), "q".into()]);
            corpus.push(vec!["z".into(), g, "r".into(), "s".into()]);
        }
        let cfg = SkipGramConfig {
            dim: 16,
            window: 2,
            epochs: 5,
            seed: 9,
            ..SkipGramConfig::default()
        };
        let t = train_skipgram(&corpus, &cfg).unwrap();
        let xy = t.cosine("x", "y").unwrap();
        let xz = t.cosine("x", "z").unwrap();
        assert!(xy > xz, "cos(x,y)={xy} cos(x,z)={xz}");
    }

    #[test]
    fn skipgram_is_deterministic_and_shaped() {
        let corpus: Vec<Vec<String>> = (0..100)
            .map(|i| {
                (0..6)
                    .map(|j| format!("w{}", (i * 7 + j * 3) % 23))
                    .collect()
            })
            .collect();
        let cfg = SkipGramConfig {
            dim: 8,
            epochs: 2,
            seed: 42,
            ..SkipGramConfig::default()
        };
        let a = train_skipgram(&corpus, &cfg).unwrap();
        let b = train_skipgram(&corpus, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.vectors().shape(), &[23, 8]);
    }

    #[test]
    fn skipgram_rejects_degenerate_corpus() {
        let corpus = vec![vec!["a".to_string(), "a".to_string()]];
        assert!(train_skipgram(&corpus, &SkipGramConfig::default()).is_err());
        assert!(train_skipgram(&[], &SkipGramConfig::default()).is_err());
    }

    #[test]
    fn vector_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        let t = table(&[
            ("tv", &[0.1, -2.5e-7, 3.0, 1.0 / 3.0]),
            ("remote", &[0.0, 1e300, -0.0, 7.0]),
        ]);
        t.save(&path).unwrap();
        assert_eq!(EmbeddingTable::load(&path).unwrap(), t);
    }

    #[test]
    fn vector_file_shapes_and_errors() {
        let t = EmbeddingTable::parse("a 1 2 3 4\nb 5 6 7 8\n").unwrap();
        assert_eq!((t.len(), t.dim()), (2, 4));
        assert!(matches!(
            EmbeddingTable::parse("a 1 2 3 4\nb 5 6 7\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            EmbeddingTable::parse("a 1 2\nb 1 x\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(EmbeddingTable::parse("").is_err());
    }

    proptest! {
        #[test]
        fn normalized_norms(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 1..30)) {
            let tokens = (0..rows.len()).map(|i| format!("t{i}")).collect();
            let t = EmbeddingTable::new(tokens, Tensor::from_rows(&rows).unwrap()).unwrap();
            let n = unit_normalize(&t);
            for i in 0..n.len() {
                let norm = norm(n.vectors().row(i));
                prop_assert!(norm == 0.0 || (norm - 1.0).abs() <= 1e-6);
            }
            prop_assert_eq!(unit_normalize(&n).vectors().data().iter().zip(n.vectors().data())
                .all(|(a, b)| (a - b).abs() <= 1e-15), true);
        }

        #[test]
        fn embedding_has_no_nan(len in 0usize..20, n in 1usize..12) {
            let t = table(&[("a", &[1.0, 2.0]), ("b", &[-1.0, 0.5])]);
            let tokens: Vec<&str> = (0..len).map(|i| ["a", "b", "oov"][i % 3]).collect();
            let e = embed_sequence(&tokens, n, &t).unwrap();
            prop_assert_eq!(e.n_real, len.min(n));
            prop_assert!(e.matrix.data().iter().all(|v| v.is_finite()));
            for i in e.n_real..n {
                prop_assert!(e.matrix.row(i).iter().all(|&v| v == 0.0));
            }
        }
    }
}
