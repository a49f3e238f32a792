//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every primitive application eagerly, so node values
//! are available as soon as an op returns. Parameters live outside the graph
//! in a [`ParamStore`]; a graph borrows the store, which lets embedding
//! lookups read rows without copying the table.

use std::fmt;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Floor applied inside [`Graph::log`].
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors, each flagged trainable or frozen.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    trainable: Vec<bool>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor, trainable: bool) -> ParamId {
        let name = name.into();
        assert!(self.id(&name).is_none(), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(tensor);
        self.trainable.push(trainable);
        ParamId(self.tensors.len() - 1)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.trainable[id.0]
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.trainable[id.0] = trainable;
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.ids()
            .map(move |id| (id, self.names[id.0].as_str(), &self.tensors[id.0]))
    }
}

/// Per-parameter gradients produced by [`Graph::backward`]. Parameters the
/// output does not depend on have no entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Gradients {
            grads: vec![None; params.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    pub fn get_mut(&mut self, id: ParamId) -> Option<&mut Tensor> {
        self.grads[id.0].as_mut()
    }

    /// Adds `other` into `self` parameter by parameter.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (mine, theirs) in self.grads.iter_mut().zip(&other.grads) {
            match (mine.as_mut(), theirs) {
                (Some(m), Some(t)) => m.add_assign(t),
                (None, Some(t)) => *mine = Some(t.clone()),
                _ => {}
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.scale(factor);
        }
    }

    pub fn clear(&mut self, id: ParamId) {
        self.grads[id.0] = None;
    }
}

type Derivative = Box<dyn Fn(f64, f64) -> f64>;

enum Op {
    Constant,
    Param(ParamId),
    Gather {
        param: ParamId,
        rows: Vec<Option<usize>>,
    },
    MatMul(Var, Var),
    MatVec(Var, Var),
    Dot(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    BroadcastHadamard(Var, Var),
    Affine {
        x: Var,
        scale: f64,
    },
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Relu(Var),
    SumAxis {
        x: Var,
        axis: usize,
    },
    SumAll(Var),
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Conv1d {
        x: Var,
        w: Var,
        width: usize,
    },
    RowNormalize {
        x: Var,
        norms: Vec<f64>,
    },
    Concat(Vec<Var>),
    Elementwise {
        x: Var,
        derivative: Derivative,
    },
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::Gather { .. } => "gather",
            Op::MatMul(..) => "matmul",
            Op::MatVec(..) => "matvec",
            Op::Dot(..) => "dot",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Hadamard(..) => "hadamard",
            Op::BroadcastHadamard(..) => "broadcast_hadamard",
            Op::Affine { .. } => "affine",
            Op::Tanh(_) => "tanh",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Relu(_) => "relu",
            Op::SumAxis { .. } => "sum_axis",
            Op::SumAll(_) => "sum",
            Op::MaxPool { .. } => "max_pool",
            Op::Conv1d { .. } => "conv1d",
            Op::RowNormalize { .. } => "row_normalize",
            Op::Concat(_) => "concat",
            Op::Elementwise { .. } => "elementwise",
        };
        f.write_str(name)
    }
}

struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        // frozen parameters act as constants
        let tracked = match op {
            Op::Param(id) | Op::Gather { param: id, .. } => self.params.is_trainable(id),
            _ => inputs.iter().any(|v| self.nodes[v.0].tracked),
        };
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, &[])
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let value = self.params.get(id).clone();
        self.push(value, Op::Param(id), &[])
    }

    /// Looks up rows of a matrix parameter. `None` yields a zero row.
    pub fn gather(&mut self, id: ParamId, rows: &[Option<usize>]) -> Result<Var> {
        let table = self.params.get(id);
        if !table.is_matrix() || rows.is_empty() {
            return Err(Error::shape("gather", table.shape(), &[rows.len()]));
        }
        let (n, k) = (table.rows(), table.cols());
        let mut out = vec![0.0; rows.len() * k];
        for (i, row) in rows.iter().enumerate() {
            if let Some(r) = *row {
                if r >= n {
                    return Err(Error::shape("gather", table.shape(), &[r]));
                }
                out[i * k..(i + 1) * k].copy_from_slice(table.row(r));
            }
        }
        let value = Tensor::from_parts(vec![rows.len(), k], out);
        Ok(self.push(
            value,
            Op::Gather {
                param: id,
                rows: rows.to_vec(),
            },
            &[],
        ))
    }

    /// `A (m×k) · B (k×n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if !av.is_matrix() || !bv.is_matrix() || av.cols() != bv.rows() {
            return Err(Error::shape("matmul", av.shape(), bv.shape()));
        }
        let value = matmul(av, bv);
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    /// `W (m×k) · x (k)`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (wv, xv) = (self.value(w), self.value(x));
        if !wv.is_matrix() || !xv.is_vector() || wv.cols() != xv.len() {
            return Err(Error::shape("matvec", wv.shape(), xv.shape()));
        }
        let value = Tensor::vector(
            (0..wv.rows())
                .map(|i| dot_slices(wv.row(i), xv.data()))
                .collect(),
        );
        Ok(self.push(value, Op::MatVec(w, x), &[w, x]))
    }

    /// `⟨A, B⟩ = A·Bᵀ`: matrices `m×k`, `n×k` give `m×n`; two `k`-vectors
    /// give a scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let value = if av.is_vector() && bv.is_vector() && av.len() == bv.len() {
            Tensor::scalar(dot_slices(av.data(), bv.data()))
        } else if av.is_matrix() && bv.is_matrix() && av.cols() == bv.cols() {
            let (m, n) = (av.rows(), bv.rows());
            let mut out = Vec::with_capacity(m * n);
            for i in 0..m {
                let ai = av.row(i);
                for j in 0..n {
                    out.push(dot_slices(ai, bv.row(j)));
                }
            }
            Tensor::from_parts(vec![m, n], out)
        } else {
            return Err(Error::shape("dot", av.shape(), bv.shape()));
        };
        Ok(self.push(value, Op::Dot(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if !av.is_matrix() {
            return Err(Error::shape("transpose", av.shape(), &[]));
        }
        let value = transpose(av);
        Ok(self.push(value, Op::Transpose(a), &[a]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip("add", a, b, |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip("sub", a, b, |x, y| x - y)?;
        Ok(self.push(value, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product of equally shaped tensors.
    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip("hadamard", a, b, |x, y| x * y)?;
        Ok(self.push(value, Op::Hadamard(a, b), &[a, b]))
    }

    /// `a (m)` repeated across the `n` columns of `b (m×n)`, then Hadamard.
    pub fn broadcast_hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if !av.is_vector() || !bv.is_matrix() || av.len() != bv.rows() {
            return Err(Error::shape("broadcast_hadamard", av.shape(), bv.shape()));
        }
        let n = bv.cols();
        let data = bv
            .data()
            .iter()
            .enumerate()
            .map(|(idx, &x)| x * av.data()[idx / n])
            .collect();
        let value = Tensor::from_parts(bv.shape().to_vec(), data);
        Ok(self.push(value, Op::BroadcastHadamard(a, b), &[a, b]))
    }

    /// `scale·x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(x).map(|v| scale * v + shift);
        self.push(value, Op::Affine { x, scale }, &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::tanh);
        self.push(value, Op::Tanh(x), &[x])
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::exp);
        self.push(value, Op::Exp(x), &[x])
    }

    /// `ln(max(x, LOG_FLOOR))`.
    pub fn log(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(LOG_FLOOR).ln());
        self.push(value, Op::Log(x), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(value, Op::Relu(x), &[x])
    }

    /// Sums a matrix along `axis`: axis 1 maps `m×n → m` (row sums), axis 0
    /// maps `m×n → n`.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xv = self.value(x);
        if !xv.is_matrix() || axis > 1 {
            return Err(Error::shape("sum_axis", xv.shape(), &[axis]));
        }
        let (m, n) = (xv.rows(), xv.cols());
        let value = if axis == 1 {
            Tensor::vector((0..m).map(|i| xv.row(i).iter().sum()).collect())
        } else {
            let mut out = vec![0.0; n];
            for i in 0..m {
                for (o, v) in out.iter_mut().zip(xv.row(i)) {
                    *o += v;
                }
            }
            Tensor::vector(out)
        };
        Ok(self.push(value, Op::SumAxis { x, axis }, &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).data().iter().sum());
        self.push(value, Op::SumAll(x), &[x])
    }

    /// Max over `axis` of a matrix, restricted to the first `limit` entries
    /// along that axis. Axis 0 maps `m×n → n`; axis 1 maps `m×n → m`.
    pub fn max_pool(&mut self, x: Var, axis: usize, limit: usize) -> Result<Var> {
        let xv = self.value(x);
        if !xv.is_matrix() || axis > 1 {
            return Err(Error::shape("max_pool", xv.shape(), &[axis]));
        }
        let (m, n) = (xv.rows(), xv.cols());
        let extent = if axis == 0 { m } else { n };
        if limit == 0 || limit > extent {
            return Err(Error::shape("max_pool", xv.shape(), &[limit]));
        }
        let outer = if axis == 0 { n } else { m };
        let mut values = Vec::with_capacity(outer);
        let mut argmax = Vec::with_capacity(outer);
        for o in 0..outer {
            let flat = |i: usize| if axis == 0 { i * n + o } else { o * n + i };
            let mut best = flat(0);
            for i in 1..limit {
                if xv.data()[flat(i)] > xv.data()[best] {
                    best = flat(i);
                }
            }
            values.push(xv.data()[best]);
            argmax.push(best);
        }
        let value = Tensor::vector(values);
        Ok(self.push(value, Op::MaxPool { x, argmax }, &[x]))
    }

    /// One-dimensional convolution over positions.
    ///
    /// `x` is `positions × in_channels`, `w` is
    /// `out_channels × (width·in_channels)` with tap `t`, channel `c` at
    /// column `t·in_channels + c`. The input is zero-padded on the right so
    /// the output keeps `positions` rows.
    pub fn conv1d(&mut self, x: Var, w: Var, width: usize) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if !xv.is_matrix() || !wv.is_matrix() || width == 0 || wv.cols() != width * xv.cols() {
            return Err(Error::shape("conv1d", xv.shape(), wv.shape()));
        }
        let value = conv1d(xv, wv, width);
        Ok(self.push(value, Op::Conv1d { x, w, width }, &[x, w]))
    }

    /// Scales every row of a matrix to unit 2-norm; zero rows stay zero.
    pub fn row_normalize(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if !xv.is_matrix() {
            return Err(Error::shape("row_normalize", xv.shape(), &[]));
        }
        let mut out = xv.clone();
        let mut norms = Vec::with_capacity(xv.rows());
        for i in 0..xv.rows() {
            let row = out.row_mut(i);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in row.iter_mut() {
                    *v /= norm;
                }
            }
            norms.push(norm);
        }
        Ok(self.push(out, Op::RowNormalize { x, norms }, &[x]))
    }

    /// Concatenates vectors (scalars count as length-1 vectors).
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for &p in parts {
            let pv = self.value(p);
            if !pv.is_vector() {
                return Err(Error::shape("concat", pv.shape(), &[]));
            }
            data.extend_from_slice(pv.data());
        }
        if data.is_empty() {
            return Err(Error::shape("concat", &[], &[]));
        }
        let value = Tensor::vector(data);
        Ok(self.push(value, Op::Concat(parts.to_vec()), parts))
    }

    /// A user-defined elementwise op. `derivative(x, y)` receives the input
    /// and output values of one element.
    pub fn elementwise(
        &mut self,
        x: Var,
        forward: impl Fn(f64) -> f64,
        derivative: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Var {
        let value = self.value(x).map(forward);
        self.push(
            value,
            Op::Elementwise {
                x,
                derivative: Box::new(derivative),
            },
            &[x],
        )
    }

    fn zip(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(op, av.shape(), bv.shape()));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(Tensor::from_parts(av.shape().to_vec(), data))
    }

    /// Reverse pass from a scalar output. The graph is left untouched and
    /// can be differentiated again.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if out.len() != 1 {
            return Err(Error::NonScalar(out.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::from_parts(out.shape().to_vec(), vec![1.0]));
        let mut result = Gradients::zeros_like(self.params);

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads, &mut result);
        }
        Ok(result)
    }

    fn propagate(
        &self,
        node: &Node,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
        result: &mut Gradients,
    ) {
        let val = |v: Var| &self.nodes[v.0].value;
        let tracked = |v: Var| self.nodes[v.0].tracked;
        let mut send = |v: Var, t: Tensor| {
            if !self.nodes[v.0].tracked {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };

        match &node.op {
            Op::Constant => {}
            Op::Param(id) => accumulate_param(result, *id, g.clone()),
            Op::Gather { param, rows } => {
                let table = self.params.get(*param);
                let k = table.cols();
                let mut dense = Tensor::zeros(table.shape());
                for (i, row) in rows.iter().enumerate() {
                    if let Some(r) = *row {
                        for (d, s) in dense
                            .row_mut(r)
                            .iter_mut()
                            .zip(&g.data()[i * k..(i + 1) * k])
                        {
                            *d += s;
                        }
                    }
                }
                accumulate_param(result, *param, dense);
            }
            Op::MatMul(a, b) => {
                if tracked(*a) {
                    send(*a, matmul(g, &transpose(val(*b))));
                }
                if tracked(*b) {
                    send(*b, matmul(&transpose(val(*a)), g));
                }
            }
            Op::MatVec(w, x) => {
                let (wv, xv) = (val(*w), val(*x));
                if tracked(*w) {
                    let mut dw = Vec::with_capacity(wv.len());
                    for &gi in g.data() {
                        dw.extend(xv.data().iter().map(|&xj| gi * xj));
                    }
                    send(*w, Tensor::from_parts(wv.shape().to_vec(), dw));
                }
                if tracked(*x) {
                    let mut dx = vec![0.0; xv.len()];
                    for (i, &gi) in g.data().iter().enumerate() {
                        for (d, &wij) in dx.iter_mut().zip(wv.row(i)) {
                            *d += gi * wij;
                        }
                    }
                    send(*x, Tensor::vector(dx));
                }
            }
            Op::Dot(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                if av.is_vector() {
                    let s = g.item();
                    if tracked(*a) {
                        send(*a, bv.map(|v| v * s));
                    }
                    if tracked(*b) {
                        send(*b, av.map(|v| v * s));
                    }
                } else {
                    if tracked(*a) {
                        send(*a, matmul(g, bv));
                    }
                    if tracked(*b) {
                        send(*b, matmul(&transpose(g), av));
                    }
                }
            }
            Op::Transpose(a) => send(*a, transpose(g)),
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, g.map(|v| -v));
            }
            Op::Hadamard(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                if tracked(*a) {
                    send(*a, zip_with(g, bv, |x, y| x * y));
                }
                if tracked(*b) {
                    send(*b, zip_with(g, av, |x, y| x * y));
                }
            }
            Op::BroadcastHadamard(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let n = bv.cols();
                if tracked(*a) {
                    let da = (0..av.len())
                        .map(|i| dot_slices(&g.data()[i * n..(i + 1) * n], bv.row(i)))
                        .collect();
                    send(*a, Tensor::vector(da));
                }
                if tracked(*b) {
                    let db = g
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(idx, &gv)| gv * av.data()[idx / n])
                        .collect();
                    send(*b, Tensor::from_parts(bv.shape().to_vec(), db));
                }
            }
            Op::Affine { x, scale } => send(*x, g.map(|v| v * scale)),
            Op::Tanh(x) => send(*x, zip_with(g, &node.value, |gv, y| gv * (1.0 - y * y))),
            Op::Exp(x) => send(*x, zip_with(g, &node.value, |gv, y| gv * y)),
            Op::Log(x) => send(
                *x,
                zip_with(
                    g,
                    val(*x),
                    |gv, xv| if xv > LOG_FLOOR { gv / xv } else { 0.0 },
                ),
            ),
            Op::Relu(x) => send(
                *x,
                zip_with(g, val(*x), |gv, xv| if xv > 0.0 { gv } else { 0.0 }),
            ),
            Op::SumAxis { x, axis } => {
                let xv = val(*x);
                let n = xv.cols();
                let data = (0..xv.len())
                    .map(|idx| {
                        if *axis == 1 {
                            g.data()[idx / n]
                        } else {
                            g.data()[idx % n]
                        }
                    })
                    .collect();
                send(*x, Tensor::from_parts(xv.shape().to_vec(), data));
            }
            Op::SumAll(x) => {
                let s = g.item();
                send(*x, val(*x).map(|_| s));
            }
            Op::MaxPool { x, argmax, .. } => {
                let mut dx = Tensor::zeros(val(*x).shape());
                for (&flat, &gv) in argmax.iter().zip(g.data()) {
                    dx.data_mut()[flat] += gv;
                }
                send(*x, dx);
            }
            Op::Conv1d { x, w, width } => {
                let (xv, wv) = (val(*x), val(*w));
                let (positions, cin) = (xv.rows(), xv.cols());
                let cout = wv.rows();
                let mut dx = Tensor::zeros(xv.shape());
                let mut dw = Tensor::zeros(wv.shape());
                for p in 0..positions {
                    for o in 0..cout {
                        let gv = g.data()[p * cout + o];
                        if gv == 0.0 {
                            continue;
                        }
                        for t in 0..*width {
                            if p + t >= positions {
                                break;
                            }
                            let xrow = xv.row(p + t);
                            let wrow = &wv.row(o)[t * cin..(t + 1) * cin];
                            for c in 0..cin {
                                dx.data_mut()[(p + t) * cin + c] += gv * wrow[c];
                                dw.data_mut()[o * width * cin + t * cin + c] += gv * xrow[c];
                            }
                        }
                    }
                }
                if tracked(*x) {
                    send(*x, dx);
                }
                if tracked(*w) {
                    send(*w, dw);
                }
            }
            Op::RowNormalize { x, norms } => {
                let y = &node.value;
                let mut dx = Tensor::zeros(y.shape());
                for (i, &norm) in norms.iter().enumerate() {
                    if norm == 0.0 {
                        continue;
                    }
                    let (yi, gi) = (y.row(i), g.row(i));
                    let proj = dot_slices(yi, gi);
                    for ((d, &yv), &gv) in dx.row_mut(i).iter_mut().zip(yi).zip(gi) {
                        *d = (gv - yv * proj) / norm;
                    }
                }
                send(*x, dx);
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = val(p).len();
                    send(p, Tensor::vector(g.data()[offset..offset + n].to_vec()));
                    offset += n;
                }
            }
            Op::Elementwise { x, derivative } => {
                let xv = val(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(xv.data().iter().zip(node.value.data()))
                    .map(|(&gv, (&xe, &ye))| gv * derivative(xe, ye))
                    .collect();
                send(*x, Tensor::from_parts(xv.shape().to_vec(), data));
            }
        }
    }
}

fn accumulate_param(result: &mut Gradients, id: ParamId, t: Tensor) {
    match &mut result.grads[id.0] {
        Some(acc) => acc.add_assign(&t),
        slot @ None => *slot = Some(t),
    }
}

#[inline]
pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for (l, &ail) in a.row(i).iter().enumerate().take(k) {
            if ail == 0.0 {
                continue;
            }
            for (o, &blj) in orow.iter_mut().zip(b.row(l)) {
                *o += ail * blj;
            }
        }
    }
    Tensor::from_parts(vec![m, n], out)
}

pub(crate) fn transpose(a: &Tensor) -> Tensor {
    let (m, n) = (a.rows(), a.cols());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a.data()[i * n + j];
        }
    }
    Tensor::from_parts(vec![n, m], out)
}

pub(crate) fn conv1d(x: &Tensor, w: &Tensor, width: usize) -> Tensor {
    let (positions, cin) = (x.rows(), x.cols());
    let cout = w.rows();
    let mut out = vec![0.0; positions * cout];
    for p in 0..positions {
        for o in 0..cout {
            let wrow = w.row(o);
            let mut acc = 0.0;
            for t in 0..width.min(positions - p) {
                acc += dot_slices(x.row(p + t), &wrow[t * cin..(t + 1) * cin]);
            }
            out[p * cout + o] = acc;
        }
    }
    Tensor::from_parts(vec![positions, cout], out)
}
