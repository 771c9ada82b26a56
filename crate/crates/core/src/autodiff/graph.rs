use std::collections::{BTreeMap, HashMap};

use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc, Tensor};
use super::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Floor applied inside `log` so cross-entropy on vanishing probabilities
/// stays finite.
pub const LOG_FLOOR: f64 = 1e-12;

/// Norm below which a cosine is treated as undefined (value and gradient 0).
pub const COSINE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    Row,
    Scalar,
}

#[derive(Debug)]
enum Op {
    Constant,
    Param,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId, Broadcast),
    Mul(NodeId, NodeId, Broadcast),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Concat(Vec<NodeId>),
    Softmax(NodeId),
    Log(NodeId),
    Neg(NodeId),
    Scale(NodeId, f64),
    Mean(NodeId),
    Sum(NodeId),
    Max(NodeId, Axis, Vec<usize>),
    Cosine(NodeId, NodeId),
    Gather(NodeId, Vec<usize>),
    StackRows(Vec<NodeId>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Eager computation record. Every operation computes its value when it is
/// added; node ids are issued in topological order, so the reverse pass is a
/// single sweep from the loss down to the leaves.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, NodeId>,
}

/// `d loss / d param` for every parameter registered in the graph.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    grads: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    /// Adds `other` into `self`, e.g. to accumulate over micro-batches.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (id, g) in &other.grads {
            match self.grads.get_mut(id) {
                Some(mine) => mine.add_assign(g),
                None => {
                    self.grads.insert(*id, g.clone());
                }
            }
        }
    }
}

fn broadcast_of(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    let (ar, ac) = a.dims2(op)?;
    let (br, bc) = b.dims2(op)?;
    if (ar, ac) == (br, bc) {
        Ok(Broadcast::Same)
    } else if br == 1 && bc == ac {
        Ok(Broadcast::Row)
    } else if br == 1 && bc == 1 {
        Ok(Broadcast::Scalar)
    } else {
        Err(Error::shape(op, &[a.shape(), b.shape()]))
    }
}

#[inline]
fn bidx(mode: Broadcast, i: usize, cols: usize) -> usize {
    match mode {
        Broadcast::Same => i,
        Broadcast::Row => i % cols,
        Broadcast::Scalar => 0,
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Constant, false)
    }

    /// The trainable leaf for `id`, created on first use.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if let Some(&n) = self.params.get(&id) {
            return n;
        }
        let n = self.push(store.get(id).clone(), Op::Param, true);
        self.params.insert(id, n);
        n
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, k) = self.value(a).dims2("matmul")?;
        let (k2, m) = self.value(b).dims2("matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", &[self.value(a).shape(), self.value(b).shape()]));
        }
        let mut out = vec![0.0; n * m];
        matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, n, k, m);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::MatMul(a, b), needs))
    }

    /// Elementwise sum; `b` may also be a `1 x cols` row or a `1 x 1` scalar.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let mode = broadcast_of("add", self.value(a), self.value(b))?;
        let (va, vb) = (self.value(a), self.value(b));
        let cols = va.cols();
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + vb.data()[bidx(mode, i, cols)])
            .collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b, mode), needs))
    }

    /// Elementwise product with the same broadcasting rules as [`Graph::add`].
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let mode = broadcast_of("mul", self.value(a), self.value(b))?;
        let (va, vb) = (self.value(a), self.value(b));
        let cols = va.cols();
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x * vb.data()[bidx(mode, i, cols)])
            .collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul(a, b, mode), needs))
    }

    fn unary(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let va = self.value(a);
        let value = Tensor::new(va.shape().to_vec(), va.data().iter().map(|&x| f(x)).collect())
            .expect("same shape");
        let needs = self.needs(a);
        self.push(value, op, needs)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Sigmoid(a), |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        })
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    /// Natural log with inputs floored at [`LOG_FLOOR`].
    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Log(a), |x| x.max(LOG_FLOOR).ln())
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Neg(a), |x| -x)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.unary(a, Op::Scale(a, c), |x| x * c)
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(Error::Invalid("concat of zero tensors".into()));
        };
        let rows = self.value(first).dims2("concat")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2("concat")?;
            if r != rows {
                return Err(Error::shape("concat", &[self.value(first).shape(), self.value(p).shape()]));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Tensor::matrix(rows, total, data)?, Op::Concat(parts.to_vec()), needs))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        let (rows, cols) = va.dims2("softmax")?;
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let row = va.row_slice(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let start = data.len();
            let mut z = 0.0;
            for &x in row {
                let e = (x - max).exp();
                z += e;
                data.push(e);
            }
            for y in &mut data[start..] {
                *y /= z;
            }
        }
        let needs = self.needs(a);
        Ok(self.push(Tensor::matrix(rows, cols, data)?, Op::Softmax(a), needs))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let m = va.data().iter().sum::<f64>() / va.len() as f64;
        let needs = self.needs(a);
        self.push(Tensor::scalar(m), Op::Mean(a), needs)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data().iter().sum::<f64>();
        let needs = self.needs(a);
        self.push(Tensor::scalar(s), Op::Sum(a), needs)
    }

    /// Maximum over an axis; the winning index (first on ties) is kept for
    /// the reverse pass. `Axis::Rows` reduces `n x d` to `1 x d`.
    pub fn max(&mut self, a: NodeId, axis: Axis) -> Result<NodeId> {
        let va = self.value(a);
        let (rows, cols) = va.dims2("max")?;
        if rows == 0 || cols == 0 {
            return Err(Error::shape("max", &[va.shape()]));
        }
        let (value, arg) = match axis {
            Axis::Rows => {
                let mut best = va.row_slice(0).to_vec();
                let mut arg = vec![0usize; cols];
                for r in 1..rows {
                    for (c, &x) in va.row_slice(r).iter().enumerate() {
                        if x > best[c] {
                            best[c] = x;
                            arg[c] = r;
                        }
                    }
                }
                (Tensor::matrix(1, cols, best)?, arg)
            }
            Axis::Cols => {
                let mut best = Vec::with_capacity(rows);
                let mut arg = Vec::with_capacity(rows);
                for r in 0..rows {
                    let row = va.row_slice(r);
                    let mut k = 0;
                    for (c, &x) in row.iter().enumerate() {
                        if x > row[k] {
                            k = c;
                        }
                    }
                    best.push(row[k]);
                    arg.push(k);
                }
                (Tensor::matrix(rows, 1, best)?, arg)
            }
        };
        let needs = self.needs(a);
        Ok(self.push(value, Op::Max(a, axis, arg), needs))
    }

    /// Row-wise cosine similarity of two `n x d` tensors, giving `n x 1`.
    /// A row whose norm is below [`COSINE_EPS`] yields 0.
    pub fn cosine(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        let (rows, _) = va.dims2("cosine")?;
        if va.shape() != vb.shape() {
            return Err(Error::shape("cosine", &[va.shape(), vb.shape()]));
        }
        let data = (0..rows)
            .map(|r| cosine_parts(va.row_slice(r), vb.row_slice(r)).0)
            .collect();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::matrix(rows, 1, data)?, Op::Cosine(a, b), needs))
    }

    /// Row selection (embedding lookup when `a` is an embedding table).
    pub fn gather(&mut self, a: NodeId, rows: &[usize]) -> Result<NodeId> {
        let va = self.value(a);
        let (n, _) = va.dims2("gather")?;
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::Shape {
                op: "gather",
                shapes: format!("row {bad} of {:?}", va.shape()),
            });
        }
        let value = va.select_rows(rows);
        let needs = self.needs(a);
        Ok(self.push(value, Op::Gather(a, rows.to_vec()), needs))
    }

    /// Concatenation along the first axis.
    pub fn stack_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        for t in &tensors {
            t.dims2("stack_rows")?;
        }
        let value = Tensor::vstack(&tensors)?;
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(value, Op::StackRows(parts.to_vec()), needs))
    }

    /// Reverse pass from a scalar `loss`. Parameters registered in this graph
    /// but unreachable from `loss` get zero gradients.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::shape("backward (loss must be scalar)", &[lv.shape()]));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param => grads[i] = Some(g),
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let (n, k) = (va.rows(), va.cols());
                    let m = vb.cols();
                    if self.needs(*a) {
                        let mut da = vec![0.0; n * k];
                        matmul_bt_acc(g.data(), vb.data(), &mut da, n, m, k);
                        acc(&mut grads, *a, va.shape(), da);
                    }
                    if self.needs(*b) {
                        let mut db = vec![0.0; k * m];
                        matmul_at_acc(va.data(), g.data(), &mut db, n, k, m);
                        acc(&mut grads, *b, vb.shape(), db);
                    }
                }
                Op::Add(a, b, mode) => {
                    if self.needs(*b) {
                        let db = reduce_broadcast(g.data(), *mode, self.value(*b), g.cols());
                        acc(&mut grads, *b, self.value(*b).shape(), db);
                    }
                    if self.needs(*a) {
                        let shape = self.value(*a).shape().to_vec();
                        acc(&mut grads, *a, &shape, g.into_data());
                    }
                }
                Op::Mul(a, b, mode) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let cols = va.cols();
                    if self.needs(*b) {
                        let prod: Vec<f64> = g.data().iter().zip(va.data()).map(|(x, y)| x * y).collect();
                        let db = reduce_broadcast(&prod, *mode, vb, cols);
                        acc(&mut grads, *b, vb.shape(), db);
                    }
                    if self.needs(*a) {
                        let da = g
                            .data()
                            .iter()
                            .enumerate()
                            .map(|(i, x)| x * vb.data()[bidx(*mode, i, cols)])
                            .collect();
                        acc(&mut grads, *a, va.shape(), da);
                    }
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    let da = g.data().iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                    acc(&mut grads, *a, node.value.shape(), da);
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    let da = g.data().iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                    acc(&mut grads, *a, node.value.shape(), da);
                }
                Op::Log(a) => {
                    let x = self.value(*a).data();
                    let da = g
                        .data()
                        .iter()
                        .zip(x)
                        .map(|(g, &x)| if x > LOG_FLOOR { g / x } else { 0.0 })
                        .collect();
                    acc(&mut grads, *a, node.value.shape(), da);
                }
                Op::Neg(a) => {
                    let da = g.data().iter().map(|x| -x).collect();
                    acc(&mut grads, *a, node.value.shape(), da);
                }
                Op::Scale(a, c) => {
                    let da = g.data().iter().map(|x| x * c).collect();
                    acc(&mut grads, *a, node.value.shape(), da);
                }
                Op::Concat(parts) => {
                    let rows = node.value.rows();
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        if self.needs(p) {
                            let mut dp = Vec::with_capacity(rows * w);
                            for r in 0..rows {
                                dp.extend_from_slice(&g.row_slice(r)[offset..offset + w]);
                            }
                            acc(&mut grads, p, self.value(p).shape(), dp);
                        }
                        offset += w;
                    }
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let (rows, cols) = (y.rows(), y.cols());
                    let mut da = Vec::with_capacity(rows * cols);
                    for r in 0..rows {
                        let (yr, gr) = (y.row_slice(r), g.row_slice(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        da.extend(yr.iter().zip(gr).map(|(y, g)| y * (g - dot)));
                    }
                    acc(&mut grads, *a, y.shape(), da);
                }
                Op::Mean(a) => {
                    let va = self.value(*a);
                    let d = g.item() / va.len() as f64;
                    acc(&mut grads, *a, va.shape(), vec![d; va.len()]);
                }
                Op::Sum(a) => {
                    let va = self.value(*a);
                    acc(&mut grads, *a, va.shape(), vec![g.item(); va.len()]);
                }
                Op::Max(a, axis, arg) => {
                    let va = self.value(*a);
                    let cols = va.cols();
                    let mut da = vec![0.0; va.len()];
                    match axis {
                        Axis::Rows => {
                            for (c, &r) in arg.iter().enumerate() {
                                da[r * cols + c] += g.data()[c];
                            }
                        }
                        Axis::Cols => {
                            for (r, &c) in arg.iter().enumerate() {
                                da[r * cols + c] += g.data()[r];
                            }
                        }
                    }
                    acc(&mut grads, *a, va.shape(), da);
                }
                Op::Cosine(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let (rows, cols) = (va.rows(), va.cols());
                    let mut da = vec![0.0; rows * cols];
                    let mut db = vec![0.0; rows * cols];
                    for r in 0..rows {
                        let (x, y) = (va.row_slice(r), vb.row_slice(r));
                        let (cos, nx, ny) = cosine_parts(x, y);
                        if nx < COSINE_EPS || ny < COSINE_EPS {
                            continue;
                        }
                        let gr = g.data()[r];
                        for c in 0..cols {
                            da[r * cols + c] = gr * (y[c] / (nx * ny) - cos * x[c] / (nx * nx));
                            db[r * cols + c] = gr * (x[c] / (nx * ny) - cos * y[c] / (ny * ny));
                        }
                    }
                    if self.needs(*a) {
                        acc(&mut grads, *a, va.shape(), da);
                    }
                    if self.needs(*b) {
                        acc(&mut grads, *b, vb.shape(), db);
                    }
                }
                Op::Gather(a, rows) => {
                    let va = self.value(*a);
                    let cols = va.cols();
                    let mut da = vec![0.0; va.len()];
                    for (i, &r) in rows.iter().enumerate() {
                        for (d, x) in da[r * cols..(r + 1) * cols].iter_mut().zip(g.row_slice(i)) {
                            *d += x;
                        }
                    }
                    acc(&mut grads, *a, va.shape(), da);
                }
                Op::StackRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let vp = self.value(p);
                        let n = vp.len();
                        if self.needs(p) {
                            acc(&mut grads, p, vp.shape(), g.data()[offset..offset + n].to_vec());
                        }
                        offset += n;
                    }
                }
            }
        }

        let mut out = Gradients::default();
        for (&pid, &nid) in &self.params {
            let g = if nid.0 <= loss.0 {
                grads[nid.0].take()
            } else {
                None
            };
            let g = g.unwrap_or_else(|| Tensor::zeros(self.value(nid).shape()));
            out.grads.insert(pid, g);
        }
        Ok(out)
    }
}

fn cosine_parts(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nx < COSINE_EPS || ny < COSINE_EPS {
        (0.0, nx, ny)
    } else {
        (dot / (nx * ny), nx, ny)
    }
}

fn reduce_broadcast(g: &[f64], mode: Broadcast, target: &Tensor, cols: usize) -> Vec<f64> {
    match mode {
        Broadcast::Same => g.to_vec(),
        Broadcast::Row => {
            let mut out = vec![0.0; target.len()];
            for (i, x) in g.iter().enumerate() {
                out[i % cols] += x;
            }
            out
        }
        Broadcast::Scalar => vec![g.iter().sum()],
    }
}

fn acc(grads: &mut [Option<Tensor>], id: NodeId, shape: &[usize], data: Vec<f64>) {
    match &mut grads[id.0] {
        Some(t) => {
            for (a, b) in t.data_mut().iter_mut().zip(&data) {
                *a += b;
            }
        }
        slot @ None => {
            *slot = Some(Tensor::new(shape.to_vec(), data).expect("gradient shape"));
        }
    }
}
