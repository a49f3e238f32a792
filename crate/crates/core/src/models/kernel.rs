use crate::embeddings::LocalEmbedding;
use crate::error::{Error, Result};
use crate::numeric::{dot_slices, Graph, ParamStore, Tensor, Var};

/// RBF kernels `exp(-(x - μ)² / 2σ²)` used to soft-count matches per
/// similarity level.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    means: Vec<f64>,
    widths: Vec<f64>,
}

impl KernelBank {
    /// Means must be strictly decreasing, widths positive.
    pub fn new(means: Vec<f64>, widths: Vec<f64>) -> Result<Self> {
        if means.is_empty() || means.len() != widths.len() {
            return Err(Error::invalid(format!(
                "kernel bank needs matching non-empty means/widths, got {} and {}",
                means.len(),
                widths.len()
            )));
        }
        if means.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::invalid("kernel means must be strictly decreasing"));
        }
        if widths.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("kernel widths must be positive"));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("kernel means must be finite"));
        }
        Ok(KernelBank { means, widths })
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }
}

impl Default for KernelBank {
    /// Exact-match kernel at 1.0 (σ = 1e-3) plus ten soft kernels from 0.9
    /// down to -0.9 in steps of 0.2 (σ = 0.1).
    fn default() -> Self {
        let means = vec![1.0, 0.9, 0.7, 0.5, 0.3, 0.1, -0.1, -0.3, -0.5, -0.7, -0.9];
        let mut widths = vec![0.1; 11];
        widths[0] = 1e-3;
        KernelBank::new(means, widths).expect("default bank is valid")
    }
}

/// Token-level similarity matrix between a query and a document, `N_Q × N_D`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    pub values: Tensor,
    pub query_real: usize,
    pub doc_real: usize,
}

/// `⟨i(q), i(d)⟩`: dot products of every query row with every document row.
/// Cosine similarities when the embeddings are unit-normalized.
pub fn interaction_matrix(q: &LocalEmbedding, d: &LocalEmbedding) -> Result<InteractionMatrix> {
    let (qm, dm) = (&q.matrix, &d.matrix);
    if qm.cols() != dm.cols() {
        return Err(Error::shape("interaction_matrix", qm.shape(), dm.shape()));
    }
    let mut values = Vec::with_capacity(qm.rows() * dm.rows());
    for i in 0..qm.rows() {
        for j in 0..dm.rows() {
            values.push(dot_slices(qm.row(i), dm.row(j)));
        }
    }
    Ok(InteractionMatrix {
        values: Tensor::new(vec![qm.rows(), dm.rows()], values)?,
        query_real: q.n_real,
        doc_real: d.n_real,
    })
}

/// Soft-TF features `φ_k = Σ_i log max(Σ_j K_k(M_ij), 1e-10)` over the
/// real query rows, evaluated through the differentiable graph ops.
pub fn kernel_features(m: &InteractionMatrix, bank: &KernelBank) -> Result<Vec<f64>> {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let mv = g.constant(m.values.clone());
    let phi = kernel_features_var(&mut g, mv, m.query_real, bank)?;
    Ok(g.value(phi).data().to_vec())
}

/// Graph form of [`kernel_features`]; `m` is `N_Q × N_D` and rows at or
/// past `query_real` are masked out.
pub fn kernel_features_var(
    g: &mut Graph,
    m: Var,
    query_real: usize,
    bank: &KernelBank,
) -> Result<Var> {
    let n_q = g.shape(m)[0];
    let mask = g.constant(Tensor::vector(
        (0..n_q)
            .map(|i| if i < query_real { 1.0 } else { 0.0 })
            .collect(),
    ));
    let mut phis = Vec::with_capacity(bank.len());
    for (&mu, &sigma) in bank.means().iter().zip(bank.widths()) {
        let centered = g.affine(m, 1.0, -mu);
        let sq = g.hadamard(centered, centered)?;
        let scaled = g.affine(sq, -1.0 / (2.0 * sigma * sigma), 0.0);
        let k = g.exp(scaled);
        let soft_tf = g.sum_axis(k, 1)?;
        let logs = g.log(soft_tf);
        let masked = g.hadamard(logs, mask)?;
        phis.push(g.sum(masked));
    }
    g.concat(&phis)
}
