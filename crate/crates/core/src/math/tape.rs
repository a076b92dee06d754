//! Reverse-mode differentiation over a fixed operation set.
//!
//! A [`Tape`] borrows a [`ParamStore`] and records every operation in forward
//! order. Parameters are never copied onto the tape: `linear` and `embedding`
//! nodes read them in place and [`Tape::backward`] accumulates their gradients
//! by [`ParamId`].

use super::ops;
use super::params::{ParamId, ParamStore};
use super::tensor::DenseArray;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower clamp applied before taking a logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op<T> {
    Input,
    Linear { input: Var, weight: ParamId, bias: ParamId },
    Embedding { table: ParamId, row: usize },
    Relu(Var),
    Concat(Vec<Var>),
    Reverse(Var),
    Stop,
    Softmax(Var),
    Pick(Var, usize),
    NegLog(Var),
    Dot(Var, Var),
    Cosine(Var, Var),
    SquaredDistance(Var, Var),
    Add(Vec<Var>),
    Sub(Var, Var),
    Scale(Var, T),
    Hinge(Var),
    Sum(Var),
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Vec<T>,
    op: Op<T>,
}

/// Gradients of a scalar with respect to every parameter it touched.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    by_param: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn empty(n_params: usize) -> Self {
        Gradients {
            by_param: vec![None; n_params],
        }
    }

    /// `None` when the parameter received no gradient at all.
    pub fn get(&self, id: ParamId) -> Option<&[T]> {
        self.by_param.get(id.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `id`, with untouched parameters reading as zeros.
    pub fn dense(&self, id: ParamId, len: usize) -> Vec<T> {
        self.get(id).map(<[T]>::to_vec).unwrap_or_else(|| vec![T::zero(); len])
    }

    pub fn n_params(&self) -> usize {
        self.by_param.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[T])> {
        self.by_param
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_deref().map(|g| (ParamId(i), g)))
    }

    /// Overwrites the gradient for `id`.
    pub fn insert(&mut self, id: ParamId, g: Vec<T>) {
        self.by_param[id.0] = Some(g);
    }

    /// Adds `scale * other` into `self`.
    pub fn accumulate(&mut self, other: &Gradients<T>, scale: T) {
        for (id, g) in other.iter() {
            let slot = self.by_param[id.0].get_or_insert_with(|| vec![T::zero(); g.len()]);
            for (s, &v) in slot.iter_mut().zip(g) {
                *s += scale * v;
            }
        }
    }

    /// Euclidean norm over every parameter's gradient.
    pub fn norm(&self) -> T {
        self.iter().flat_map(|(_, g)| g.iter()).map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn scale(&mut self, factor: T) {
        for g in self.by_param.iter_mut().flatten() {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }

    fn slot(&mut self, id: ParamId, len: usize) -> &mut Vec<T> {
        self.by_param[id.0].get_or_insert_with(|| vec![T::zero(); len])
    }
}

pub struct Tape<'p, T: Scalar> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    clamped_logs: usize,
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            clamped_logs: 0,
        }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// How many `neg_log` inputs fell below [`LOG_FLOOR`].
    pub fn clamped_logs(&self) -> usize {
        self.clamped_logs
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    /// Value of a one-element node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, value: Vec<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, values: Vec<T>) -> Var {
        self.push(values, Op::Input)
    }

    /// `weight · input + bias` with `weight` of shape `[out, in]`.
    pub fn linear(&mut self, input: Var, weight: ParamId, bias: ParamId) -> Result<Var> {
        let w = self.params.get(weight);
        let b = self.params.get(bias);
        let x = &self.nodes[input.0].value;
        let (rows, cols) = match w.shape() {
            [r, c] => (*r, *c),
            s => return Err(Error::Dimension(format!("linear weight must be 2-D, got {s:?}"))),
        };
        if cols != x.len() || b.len() != rows {
            return Err(Error::Dimension(format!(
                "linear `{}`: weight {rows}x{cols}, bias {}, input {}",
                self.params.path(weight),
                b.len(),
                x.len()
            )));
        }
        let out: Vec<T> = (0..rows)
            .map(|r| ops::dot(w.row(r), x) + b.as_slice()[r])
            .collect();
        Ok(self.push(out, Op::Linear { input, weight, bias }))
    }

    /// Row `row` of an embedding table.
    pub fn embedding(&mut self, table: ParamId, row: usize) -> Result<Var> {
        let t = self.params.get(table);
        let rows = t.shape()[0];
        if t.shape().len() != 2 || row >= rows {
            return Err(Error::EmbeddingLookup {
                table: self.params.path(table).to_string(),
                row,
                rows,
            });
        }
        let value = t.row(row).to_vec();
        Ok(self.push(value, Op::Embedding { table, row }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.iter().map(|&v| v.max(T::zero())).collect();
        self.push(value, Op::Relu(x))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let value = parts
            .iter()
            .flat_map(|p| self.nodes[p.0].value.iter().copied())
            .collect();
        self.push(value, Op::Concat(parts.to_vec()))
    }

    /// Identity forward; the backward pass negates the upstream gradient.
    pub fn gradient_reversal(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.clone();
        self.push(value, Op::Reverse(x))
    }

    /// Identity forward; nothing flows back through this node.
    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.clone();
        self.push(value, Op::Stop)
    }

    pub fn softmax(&mut self, logits: Var) -> Var {
        let value = ops::softmax_probabilities(&self.nodes[logits.0].value);
        self.push(value, Op::Softmax(logits))
    }

    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var> {
        let len = self.nodes[x.0].value.len();
        if index >= len {
            return Err(Error::Dimension(format!("pick {index} from width {len}")));
        }
        let value = vec![self.nodes[x.0].value[index]];
        Ok(self.push(value, Op::Pick(x, index)))
    }

    /// `-ln(max(x, LOG_FLOOR))` on a one-element node.
    pub fn neg_log(&mut self, x: Var) -> Result<Var> {
        let v = self.one(x, "neg_log")?;
        let floor = T::lit(LOG_FLOOR);
        if v <= floor {
            self.clamped_logs += 1;
            log::debug!("neg_log input {v} clamped to {LOG_FLOOR}");
        }
        Ok(self.push(vec![-v.max(floor).ln()], Op::NegLog(x)))
    }

    pub fn dot(&mut self, u: Var, v: Var) -> Result<Var> {
        let (a, b) = (&self.nodes[u.0].value, &self.nodes[v.0].value);
        if a.len() != b.len() {
            return Err(Error::Dimension(format!("dot of widths {} and {}", a.len(), b.len())));
        }
        let d = ops::dot(a, b);
        Ok(self.push(vec![d], Op::Dot(u, v)))
    }

    pub fn cosine(&mut self, u: Var, v: Var) -> Result<Var> {
        let c = ops::cosine_similarity(&self.nodes[u.0].value, &self.nodes[v.0].value)?;
        Ok(self.push(vec![c], Op::Cosine(u, v)))
    }

    pub fn squared_distance(&mut self, u: Var, v: Var) -> Result<Var> {
        let d = ops::squared_distance(&self.nodes[u.0].value, &self.nodes[v.0].value)?;
        Ok(self.push(vec![d], Op::SquaredDistance(u, v)))
    }

    /// Elementwise sum of equally shaped nodes.
    pub fn add(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Empty("add of zero terms".into()))?;
        let mut value = self.nodes[first.0].value.clone();
        for p in &parts[1..] {
            let other = &self.nodes[p.0].value;
            if other.len() != value.len() {
                return Err(Error::Dimension(format!(
                    "add of widths {} and {}",
                    value.len(),
                    other.len()
                )));
            }
            for (a, &b) in value.iter_mut().zip(other) {
                *a += b;
            }
        }
        Ok(self.push(value, Op::Add(parts.to_vec())))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if x.len() != y.len() {
            return Err(Error::Dimension(format!("sub of widths {} and {}", x.len(), y.len())));
        }
        let value = x.iter().zip(y).map(|(&p, &q)| p - q).collect();
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let value = self.nodes[x.0].value.iter().map(|&v| v * factor).collect();
        self.push(value, Op::Scale(x, factor))
    }

    /// `max(x, 0)` on a one-element node.
    pub fn hinge(&mut self, x: Var) -> Result<Var> {
        let v = self.one(x, "hinge")?;
        Ok(self.push(vec![v.max(T::zero())], Op::Hinge(x)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0].value.iter().copied().sum();
        self.push(vec![s], Op::Sum(x))
    }

    fn one(&self, x: Var, what: &str) -> Result<T> {
        match self.nodes[x.0].value.as_slice() {
            [v] => Ok(*v),
            other => Err(Error::Dimension(format!(
                "{what} expects a scalar, got width {}",
                other.len()
            ))),
        }
    }

    /// Gradient of the scalar `loss` with respect to every parameter.
    ///
    /// Nodes are visited in exact reverse recording order, starting at `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        self.backward_with_inputs(loss).map(|(g, _)| g)
    }

    /// Like [`Tape::backward`], also returning the gradient reaching each node.
    pub fn backward_with_inputs(&self, loss: Var) -> Result<(Gradients<T>, NodeGradients<T>)> {
        self.one(loss, "backward")?;
        let mut params: Gradients<T> = Gradients::empty(self.params.len());
        let mut adj: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Linear { input, weight, bias } => {
                    let w = self.params.get(*weight);
                    let x = &self.nodes[input.0].value;
                    let cols = x.len();
                    {
                        let gw = params.slot(*weight, w.len());
                        for (r, &gr) in g.iter().enumerate() {
                            if gr == T::zero() {
                                continue;
                            }
                            for (slot, &xc) in gw[r * cols..(r + 1) * cols].iter_mut().zip(x) {
                                *slot += gr * xc;
                            }
                        }
                    }
                    {
                        let gb = params.slot(*bias, g.len());
                        for (slot, &gr) in gb.iter_mut().zip(&g) {
                            *slot += gr;
                        }
                    }
                    let mut gx = vec![T::zero(); cols];
                    for (r, &gr) in g.iter().enumerate() {
                        if gr == T::zero() {
                            continue;
                        }
                        for (slot, &wv) in gx.iter_mut().zip(w.row(r)) {
                            *slot += gr * wv;
                        }
                    }
                    add_into(&mut adj, *input, gx);
                }
                Op::Embedding { table, row } => {
                    let t = self.params.get(*table);
                    let dim = t.shape()[1];
                    let gt = params.slot(*table, t.len());
                    for (slot, &gv) in gt[row * dim..(row + 1) * dim].iter_mut().zip(&g) {
                        *slot += gv;
                    }
                }
                Op::Relu(x) => {
                    let xv = &self.nodes[x.0].value;
                    let gx = g
                        .iter()
                        .zip(xv)
                        .map(|(&gv, &v)| if v > T::zero() { gv } else { T::zero() })
                        .collect();
                    add_into(&mut adj, *x, gx);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.len();
                        add_into(&mut adj, *p, g[offset..offset + n].to_vec());
                        offset += n;
                    }
                }
                Op::Reverse(x) => {
                    add_into(&mut adj, *x, g.iter().map(|&v| -v).collect());
                }
                Op::Stop => {}
                Op::Softmax(x) => {
                    let p = &node.value;
                    let gp = ops::dot(&g, p);
                    let gx = p.iter().zip(&g).map(|(&pi, &gi)| pi * (gi - gp)).collect();
                    add_into(&mut adj, *x, gx);
                }
                Op::Pick(x, index) => {
                    let mut gx = vec![T::zero(); self.nodes[x.0].value.len()];
                    gx[*index] = g[0];
                    add_into(&mut adj, *x, gx);
                }
                Op::NegLog(x) => {
                    let v = self.nodes[x.0].value[0];
                    let gx = if v > T::lit(LOG_FLOOR) { -g[0] / v } else { T::zero() };
                    add_into(&mut adj, *x, vec![gx]);
                }
                Op::Dot(u, v) => {
                    let gu = self.nodes[v.0].value.iter().map(|&b| g[0] * b).collect();
                    let gv = self.nodes[u.0].value.iter().map(|&a| g[0] * a).collect();
                    add_into(&mut adj, *u, gu);
                    add_into(&mut adj, *v, gv);
                }
                Op::Cosine(u, v) => {
                    let (uv, vv) = (&self.nodes[u.0].value, &self.nodes[v.0].value);
                    let (nu, nv) = (ops::norm(uv), ops::norm(vv));
                    let c = node.value[0];
                    let inv = T::one() / (nu * nv);
                    let gu = uv
                        .iter()
                        .zip(vv)
                        .map(|(&a, &b)| g[0] * (b * inv - c * a / (nu * nu)))
                        .collect();
                    let gv = uv
                        .iter()
                        .zip(vv)
                        .map(|(&a, &b)| g[0] * (a * inv - c * b / (nv * nv)))
                        .collect();
                    add_into(&mut adj, *u, gu);
                    add_into(&mut adj, *v, gv);
                }
                Op::SquaredDistance(u, v) => {
                    let (uv, vv) = (&self.nodes[u.0].value, &self.nodes[v.0].value);
                    let two = T::lit(2.0);
                    let gu: Vec<T> = uv.iter().zip(vv).map(|(&a, &b)| two * g[0] * (a - b)).collect();
                    let gv = gu.iter().map(|&x| -x).collect();
                    add_into(&mut adj, *u, gu);
                    add_into(&mut adj, *v, gv);
                }
                Op::Add(parts) => {
                    for p in parts {
                        add_into(&mut adj, *p, g.clone());
                    }
                }
                Op::Sub(a, b) => {
                    add_into(&mut adj, *b, g.iter().map(|&v| -v).collect());
                    add_into(&mut adj, *a, g.clone());
                }
                Op::Scale(x, factor) => {
                    add_into(&mut adj, *x, g.iter().map(|&v| v * *factor).collect());
                }
                Op::Hinge(x) => {
                    let gx = if self.nodes[x.0].value[0] > T::zero() { g[0] } else { T::zero() };
                    add_into(&mut adj, *x, vec![gx]);
                }
                Op::Sum(x) => {
                    let n = self.nodes[x.0].value.len();
                    add_into(&mut adj, *x, vec![g[0]; n]);
                }
            }
            adj[i] = Some(g);
        }

        if let Some((id, _)) = params.iter().find(|(_, g)| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::Divergence(format!(
                "non-finite gradient for `{}`",
                self.params.path(id)
            )));
        }
        Ok((params, NodeGradients { adj }))
    }
}

/// Gradient that reached each recorded node during a backward pass.
#[derive(Clone, Debug)]
pub struct NodeGradients<T> {
    adj: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> NodeGradients<T> {
    /// `None` when nothing flowed into `v`.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.adj.get(v.0).and_then(|g| g.as_deref())
    }
}

fn add_into<T: Scalar>(adj: &mut [Option<Vec<T>>], target: Var, g: Vec<T>) {
    match &mut adj[target.0] {
        Some(existing) => {
            for (e, v) in existing.iter_mut().zip(g) {
                *e += v;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

/// Gradient as a dense array shaped like its parameter.
pub fn gradient_array<T: Scalar>(
    grads: &Gradients<T>,
    params: &ParamStore<T>,
    id: ParamId,
) -> Result<DenseArray<T>> {
    let p = params.get(id);
    DenseArray::new(p.shape().to_vec(), grads.dense(id, p.len()))
}
