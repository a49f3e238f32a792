use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Architecture, Head, ModelConfig};
use super::kernel::kernel_features_var;
use super::Scorer;
use crate::embeddings::{EmbeddingTable, LocalEmbedding};
use crate::error::{Error, Result};
use crate::numeric::{Checkpoint, Graph, ParamId, ParamStore, Tensor, Var};

pub const EMBEDDING: &str = "embedding";

/// Token ids of one padded sequence; `None` marks padding or unknown tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Input {
    pub ids: Vec<Option<usize>>,
    pub n_real: usize,
}

/// A sequence inside a graph, already reduced as far as the architecture
/// allows without seeing the other side.
#[derive(Debug, Clone, Copy)]
pub enum Prepared {
    /// Row-normalized `N × dim` embedding.
    Local { x: Var, n_real: usize },
    /// `dim(V)` encoding.
    Encoded(Var),
}

/// Any trainable architecture: an embedding table plus the weights its
/// descriptor calls for.
#[derive(Debug, Clone)]
pub struct NeuralModel {
    config: ModelConfig,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    params: ParamStore,
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches")
}

/// Expected `(name, shape)` of every non-embedding weight.
fn weight_shapes(cfg: &ModelConfig) -> Vec<(&'static str, Vec<usize>)> {
    match cfg.architecture {
        Architecture::TfIdf => vec![],
        Architecture::KernelPooling => vec![("kp.w", vec![cfg.kernels.len()]), ("kp.b", vec![1])],
        Architecture::Siamese => vec![
            ("cnn.w", vec![cfg.repr_dim, cfg.window * cfg.dim]),
            ("mlp.w", vec![cfg.repr_dim, cfg.repr_dim]),
            ("mlp.b", vec![cfg.repr_dim]),
        ],
        Architecture::DssmLike => vec![
            ("mlp1.w", vec![cfg.hidden, cfg.dim]),
            ("mlp1.b", vec![cfg.hidden]),
            ("mlp2.w", vec![cfg.hidden, cfg.hidden]),
            ("mlp2.b", vec![cfg.hidden]),
            ("mlp3.w", vec![cfg.repr_dim, cfg.hidden]),
            ("mlp3.b", vec![cfg.repr_dim]),
        ],
        Architecture::HybridLocal => vec![
            ("cnn.w", vec![cfg.channels, cfg.window * cfg.n_q]),
            ("mlp.w", vec![cfg.channels]),
            ("mlp.b", vec![1]),
        ],
    }
}

impl NeuralModel {
    /// Fresh model around a copy of `table`. Matrices get Glorot-uniform
    /// init, biases zero, the kernel-pooling head small uniform weights.
    pub fn new(config: ModelConfig, table: &EmbeddingTable, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.architecture == Architecture::TfIdf {
            return Err(Error::ArchitectureMismatch {
                expected: "a trainable architecture".into(),
                found: config.architecture.to_string(),
            });
        }
        if table.dim() != config.dim {
            return Err(Error::invalid(format!(
                "embedding dim {} does not match descriptor dim {}",
                table.dim(),
                config.dim
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        params.add(EMBEDDING, table.vectors().clone(), table.trainable());
        for (name, shape) in weight_shapes(&config) {
            let t = if name.ends_with(".b") {
                Tensor::zeros(&shape)
            } else if name == "kp.w" {
                Tensor::vector((0..shape[0]).map(|_| rng.gen_range(-0.01..0.01)).collect())
            } else if shape.len() == 1 {
                Tensor::vector(xavier(&mut rng, 1, shape[0]).into_data())
            } else {
                xavier(&mut rng, shape[0], shape[1])
            };
            params.add(name, t, true);
        }
        Ok(Self::assemble(config, table.tokens().to_vec(), params))
    }

    fn assemble(config: ModelConfig, tokens: Vec<String>, params: ParamStore) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        NeuralModel {
            config,
            tokens,
            index,
            params,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn architecture(&self) -> Architecture {
        self.config.architecture
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn embedding_id(&self) -> ParamId {
        self.params.id(EMBEDDING).expect("embedding present")
    }

    fn pid(&self, name: &str) -> ParamId {
        self.params
            .id(name)
            .expect("weights validated at construction")
    }

    /// Current embedding weights as a table.
    pub fn embedding_table(&self) -> EmbeddingTable {
        let id = self.embedding_id();
        let mut t = EmbeddingTable::new(self.tokens.clone(), self.params.get(id).clone())
            .expect("valid table");
        t.set_trainable(self.params.is_trainable(id));
        t
    }

    pub fn set_embedding_trainable(&mut self, trainable: bool) {
        let id = self.embedding_id();
        self.params.set_trainable(id, trainable);
    }

    fn input<S: AsRef<str>>(&self, tokens: &[S], n: usize) -> Input {
        let n_real = tokens.len().min(n);
        let mut ids: Vec<Option<usize>> = tokens[..n_real]
            .iter()
            .map(|t| self.index.get(t.as_ref()).copied())
            .collect();
        ids.resize(n, None);
        Input { ids, n_real }
    }

    /// Query tokens truncated/padded to `N_Q`.
    pub fn query_input<S: AsRef<str>>(&self, tokens: &[S]) -> Input {
        self.input(tokens, self.config.n_q)
    }

    /// Document tokens truncated/padded to `N_D`.
    pub fn doc_input<S: AsRef<str>>(&self, tokens: &[S]) -> Input {
        self.input(tokens, self.config.n_d)
    }

    /// Gathers and row-normalizes the embeddings of `input`.
    pub fn embed(&self, g: &mut Graph, input: &Input) -> Result<Var> {
        let x = g.gather(self.embedding_id(), &input.ids)?;
        g.row_normalize(x)
    }

    /// Side-independent part of scoring: the encoder for the distributed
    /// family, nothing for interaction-based models.
    pub fn prepare(&self, g: &mut Graph, x: Var, n_real: usize) -> Result<Prepared> {
        if self.config.architecture.is_distributed() {
            Ok(Prepared::Encoded(self.encode_var(g, x, n_real)?))
        } else {
            Ok(Prepared::Local { x, n_real })
        }
    }

    pub fn prepare_input(&self, g: &mut Graph, input: &Input) -> Result<Prepared> {
        let x = self.embed(g, input)?;
        self.prepare(g, x, input.n_real)
    }

    /// `g(x)` for siamese (`mlp₁ ∘ cnn₁`) and dssm_like (`mlp₃ ∘ σ₁`).
    pub fn encode_var(&self, g: &mut Graph, x: Var, n_real: usize) -> Result<Var> {
        match self.config.architecture {
            Architecture::Siamese => {
                let w = g.param(self.pid("cnn.w"));
                let conv = g.conv1d(x, w, self.config.window)?;
                let act = g.tanh(conv);
                let pooled = g.max_pool(act, 0, n_real.max(1))?;
                self.dense(g, pooled, "mlp", true)
            }
            Architecture::DssmLike => {
                let mut h = g.sum_axis(x, 0)?;
                for layer in ["mlp1", "mlp2", "mlp3"] {
                    h = self.dense(g, h, layer, true)?;
                }
                Ok(h)
            }
            other => Err(Error::ArchitectureMismatch {
                expected: "siamese or dssm_like".into(),
                found: other.to_string(),
            }),
        }
    }

    fn dense(&self, g: &mut Graph, x: Var, layer: &str, tanh: bool) -> Result<Var> {
        let w = g.param(self.pid(&format!("{layer}.w")));
        let b = g.param(self.pid(&format!("{layer}.b")));
        let wx = g.matvec(w, x)?;
        let z = g.add(wx, b)?;
        Ok(if tanh { g.tanh(z) } else { z })
    }

    fn head(&self, g: &mut Graph, z: Var) -> Var {
        match self.config.head {
            Head::Tanh => g.tanh(z),
            Head::Linear => z,
        }
    }

    /// Scalar score of two prepared sequences.
    pub fn score_prepared(&self, g: &mut Graph, q: Prepared, d: Prepared) -> Result<Var> {
        match (self.config.architecture, q, d) {
            (
                Architecture::Siamese | Architecture::DssmLike,
                Prepared::Encoded(a),
                Prepared::Encoded(b),
            ) => g.dot(a, b),
            (
                Architecture::KernelPooling,
                Prepared::Local { x: qx, n_real },
                Prepared::Local { x: dx, .. },
            ) => {
                let m = g.dot(qx, dx)?;
                let phi = kernel_features_var(g, m, n_real, &self.config.kernels)?;
                let w = g.param(self.pid("kp.w"));
                let b = g.param(self.pid("kp.b"));
                let wphi = g.dot(w, phi)?;
                let z = g.add(wphi, b)?;
                Ok(self.head(g, z))
            }
            (
                Architecture::HybridLocal,
                Prepared::Local { x: qx, .. },
                Prepared::Local { x: dx, n_real },
            ) => {
                let m = g.dot(dx, qx)?; // N_D × N_Q
                let w = g.param(self.pid("cnn.w"));
                let conv = g.conv1d(m, w, self.config.window)?;
                let act = g.tanh(conv);
                let pooled = g.max_pool(act, 0, n_real.max(1))?;
                let v = g.param(self.pid("mlp.w"));
                let b = g.param(self.pid("mlp.b"));
                let vz = g.dot(v, pooled)?;
                let z = g.add(vz, b)?;
                Ok(self.head(g, z))
            }
            (arch, ..) => Err(Error::invalid(format!(
                "prepared inputs do not fit a {arch} model"
            ))),
        }
    }

    pub fn score_var(&self, g: &mut Graph, q: &Input, d: &Input) -> Result<Var> {
        let qp = self.prepare_input(g, q)?;
        let dp = self.prepare_input(g, d)?;
        self.score_prepared(g, qp, dp)
    }

    pub fn score_tokens<S: AsRef<str>>(&self, query: &[S], doc: &[S]) -> Result<f64> {
        let mut g = Graph::new(&self.params);
        let s = self.score_var(&mut g, &self.query_input(query), &self.doc_input(doc))?;
        Ok(g.value(s).item())
    }

    /// Encoding of a token sequence padded to `n` positions.
    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S], n: usize) -> Result<Vec<f64>> {
        let input = self.input(tokens, n.max(1));
        let mut g = Graph::new(&self.params);
        let x = self.embed(&mut g, &input)?;
        let v = self.encode_var(&mut g, x, input.n_real)?;
        Ok(g.value(v).data().to_vec())
    }

    fn local_var(&self, g: &mut Graph, e: &LocalEmbedding, n: usize) -> Result<(Var, usize)> {
        let (rows, dim) = (e.matrix.rows(), e.matrix.cols());
        if dim != self.config.dim {
            return Err(Error::shape(
                "local embedding",
                e.matrix.shape(),
                &[n, self.config.dim],
            ));
        }
        let mut data = e.matrix.data()[..rows.min(n) * dim].to_vec();
        data.resize(n * dim, 0.0);
        let x = g.constant(Tensor::new(vec![n, dim], data)?);
        Ok((g.row_normalize(x)?, e.n_real.min(n)))
    }

    /// Scores embedded sequences (padded or truncated to `N_Q` / `N_D`).
    pub fn score_embedded(&self, q: &LocalEmbedding, d: &LocalEmbedding) -> Result<f64> {
        let mut g = Graph::new(&self.params);
        let (qx, qn) = self.local_var(&mut g, q, self.config.n_q)?;
        let (dx, dn) = self.local_var(&mut g, d, self.config.n_d)?;
        let qp = self.prepare(&mut g, qx, qn)?;
        let dp = self.prepare(&mut g, dx, dn)?;
        let s = self.score_prepared(&mut g, qp, dp)?;
        Ok(g.value(s).item())
    }

    pub fn encode_embedded(&self, x: &LocalEmbedding) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.params);
        let (v, n) = self.local_var(&mut g, x, x.matrix.rows())?;
        let e = self.encode_var(&mut g, v, n)?;
        Ok(g.value(e).data().to_vec())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            descriptor: self.config.to_string(),
            tokens: self.tokens.clone(),
            params: self.params.clone(),
        }
    }

    /// Rebuilds a model, checking every weight against the descriptor.
    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let config: ModelConfig = ck.descriptor.parse()?;
        let mismatch = |found: String| Error::ArchitectureMismatch {
            expected: ck.descriptor.clone(),
            found,
        };
        let mut expected = weight_shapes(&config);
        expected.push((EMBEDDING, vec![ck.tokens.len(), config.dim]));
        if ck.params.len() != expected.len() {
            return Err(mismatch(format!("{} weight tensors", ck.params.len())));
        }
        for (name, shape) in &expected {
            let id = ck
                .params
                .id(name)
                .ok_or_else(|| mismatch(format!("no tensor {name:?}")))?;
            let got = ck.params.get(id).shape();
            if got != shape.as_slice() {
                return Err(mismatch(format!("{name} with shape {got:?}")));
            }
        }
        Ok(Self::assemble(config, ck.tokens, ck.params))
    }
}

impl Scorer for NeuralModel {
    fn score(&self, query: &[String], doc: &[String]) -> Result<f64> {
        self.score_tokens(query, doc)
    }
}

fn require(model: &NeuralModel, ok: bool, expected: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::ArchitectureMismatch {
            expected: expected.into(),
            found: model.architecture().to_string(),
        })
    }
}

/// `tanh(w·φ(⟨q, d⟩) + b)` (or its linear variant).
pub fn kernel_pooling_score(
    q: &LocalEmbedding,
    d: &LocalEmbedding,
    model: &NeuralModel,
) -> Result<f64> {
    require(
        model,
        model.architecture() == Architecture::KernelPooling,
        "kernel_pooling",
    )?;
    model.score_embedded(q, d)
}

/// Shared-encoder output `g(x)`.
pub fn distributed_encode(x: &LocalEmbedding, model: &NeuralModel) -> Result<Vec<f64>> {
    require(
        model,
        model.architecture().is_distributed(),
        "siamese or dssm_like",
    )?;
    model.encode_embedded(x)
}

/// `⟨g(q), g(d)⟩`.
pub fn distributed_score(
    q: &LocalEmbedding,
    d: &LocalEmbedding,
    model: &NeuralModel,
) -> Result<f64> {
    require(
        model,
        model.architecture().is_distributed(),
        "siamese or dssm_like",
    )?;
    model.score_embedded(q, d)
}

/// `mlp ∘ cnn` over the interaction matrix.
pub fn hybrid_local_score(
    q: &LocalEmbedding,
    d: &LocalEmbedding,
    model: &NeuralModel,
) -> Result<f64> {
    require(
        model,
        model.architecture() == Architecture::HybridLocal,
        "hybrid_local",
    )?;
    model.score_embedded(q, d)
}
