use std::sync::Arc;

use rand::Rng;

use super::{gemm, Tensor};
use crate::error::{Error, Result};

/// Inputs to `ln` are clamped to at least this value.
pub const LOG_FLOOR: f64 = 1e-300;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    MatMul(Var, Var),
    BatchMatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Clamp(Var, f64, f64),
    Softmax(Var),
    LogSoftmax(Var),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
    Sum(Var),
    Mean(Var),
    Gather(Var, Vec<usize>),
    Reshape(Var),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Input => vec![],
            MatMul(a, b) | BatchMatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b)
            | AddBias(a, b) => vec![*a, *b],
            Scale(a, _) | AddScalar(a) | Tanh(a) | Sigmoid(a) | Exp(a) | Log(a)
            | Clamp(a, _, _) | Softmax(a) | LogSoftmax(a) | Slice(a, _, _) | Sum(a)
            | Mean(a) | Gather(a, _) | Reshape(a) => vec![*a],
            Concat(vs) => vs.clone(),
        }
    }
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// A dynamically recorded computation graph.
///
/// Nodes are appended in execution order, so every node's inputs precede it
/// and a reverse sweep over the node list is a valid backward schedule.
/// Shape mismatches between operands are programming errors and panic.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by leaf variable.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to a leaf that requires grad.
    /// `None` when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn assert_same_shape(op: &str, a: &Tensor, b: &Tensor) {
    assert_eq!(a.shape(), b.shape(), "{op}: operand shapes differ");
}

fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn softmax_rows(x: &Tensor, mask: Option<&[bool]>) -> Tensor {
    let cols = x.cols();
    let mut out = vec![0.0; x.len()];
    for (r, (row, dst)) in x.data().chunks(cols).zip(out.chunks_mut(cols)).enumerate() {
        let keep = |i: usize| mask.map_or(true, |m| m[r * cols + i]);
        let max = (0..cols).filter(|&i| keep(i)).map(|i| row[i]).fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let mut total = 0.0;
        for i in 0..cols {
            if keep(i) {
                dst[i] = (row[i] - max).exp();
                total += dst[i];
            }
        }
        for v in dst.iter_mut() {
            *v /= total;
        }
    }
    Tensor::new(x.shape().to_vec(), out).expect("same shape")
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a leaf holding `value`.
    pub fn input(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.shared(Arc::new(value), requires_grad)
    }

    /// Records a leaf backed by a shared tensor (parameters are bound this
    /// way so a graph never copies weights).
    pub fn shared(&mut self, value: Arc<Tensor>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Input, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.input(value, false)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value: Arc::new(value), op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert!(av.shape().len() == 2 && bv.shape().len() == 2, "matmul expects 2-D operands");
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        assert_eq!(k, bv.shape()[0], "matmul: inner dimensions differ");
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), false, &mut out, 0.0);
        self.push(Tensor::matrix(m, n, out), Op::MatMul(a, b))
    }

    /// `[B, m, k] x [B, k, n] -> [B, m, n]`.
    pub fn batch_matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert!(av.shape().len() == 3 && bv.shape().len() == 3, "batch_matmul expects 3-D operands");
        let (bs, m, k, n) = (av.shape()[0], av.shape()[1], av.shape()[2], bv.shape()[2]);
        assert_eq!(bs, bv.shape()[0], "batch_matmul: batch sizes differ");
        assert_eq!(k, bv.shape()[1], "batch_matmul: inner dimensions differ");
        let mut out = vec![0.0; bs * m * n];
        for i in 0..bs {
            gemm(
                m,
                k,
                n,
                &av.data()[i * m * k..(i + 1) * m * k],
                false,
                &bv.data()[i * k * n..(i + 1) * k * n],
                false,
                &mut out[i * m * n..(i + 1) * m * n],
                0.0,
            );
        }
        let value = Tensor::new(vec![bs, m, n], out).expect("valid shape");
        self.push(value, Op::BatchMatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_same_shape("add", self.value(a), self.value(b));
        let value = zip_with(self.value(a), self.value(b), |x, y| x + y);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_same_shape("sub", self.value(a), self.value(b));
        let value = zip_with(self.value(a), self.value(b), |x, y| x - y);
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_same_shape("mul", self.value(a), self.value(b));
        let value = zip_with(self.value(a), self.value(b), |x, y| x * y);
        self.push(value, Op::Mul(a, b))
    }

    /// Adds a bias vector to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(bias));
        let cols = av.cols();
        assert_eq!(bv.len(), cols, "add_bias: bias length differs from row width");
        let mut out = av.data().to_vec();
        for row in out.chunks_mut(cols) {
            for (x, b) in row.iter_mut().zip(bv.data()) {
                *x += b;
            }
        }
        let value = Tensor::new(av.shape().to_vec(), out).expect("same shape");
        self.push(value, Op::AddBias(a, bias))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x * c);
        self.push(value, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x + c);
        self.push(value, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.push(value, Op::Exp(a))
    }

    /// Natural log with the input clamped to at least [`LOG_FLOOR`].
    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(LOG_FLOOR).ln());
        self.push(value, Op::Log(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(value, Op::Clamp(a, lo, hi))
    }

    /// Softmax over the last axis, max-subtracted.
    pub fn softmax(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a), None);
        self.push(value, Op::Softmax(a))
    }

    /// Softmax over the last axis restricted to entries where `mask` is
    /// true; masked entries come out exactly zero. A fully masked row yields
    /// all zeros.
    pub fn masked_softmax(&mut self, a: Var, mask: &[bool]) -> Var {
        assert_eq!(mask.len(), self.value(a).len(), "masked_softmax: mask length");
        let value = softmax_rows(self.value(a), Some(mask));
        // The backward rule only needs the output, which is already zero at
        // masked entries.
        self.push(value, Op::Softmax(a))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let cols = av.cols();
        let mut out = av.data().to_vec();
        for row in out.chunks_mut(cols) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
        let value = Tensor::new(av.shape().to_vec(), out).expect("same shape");
        self.push(value, Op::LogSoftmax(a))
    }

    /// Concatenation along the last axis; leading axes must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let v = self.value(p);
                assert_eq!(v.rows(), rows, "concat: leading sizes differ");
                v.cols()
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let mut shape = self.value(parts[0]).shape().to_vec();
        *shape.last_mut().unwrap() = total;
        let value = Tensor::new(shape, out).expect("valid shape");
        self.push(value, Op::Concat(parts.to_vec()))
    }

    /// Columns `start..end` of the last axis.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Var {
        let av = self.value(a);
        assert!(start < end && end <= av.cols(), "slice {start}..{end} out of range");
        let mut out = Vec::with_capacity(av.rows() * (end - start));
        for r in 0..av.rows() {
            out.extend_from_slice(&av.row(r)[start..end]);
        }
        let mut shape = av.shape().to_vec();
        *shape.last_mut().unwrap() = end - start;
        let value = Tensor::new(shape, out).expect("valid shape");
        self.push(value, Op::Slice(a, start, end))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(value, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let value = Tensor::scalar(av.data().iter().sum::<f64>() / av.len() as f64);
        self.push(value, Op::Mean(a))
    }

    /// Selects rows of `table` (viewed as 2-D) by index.
    pub fn gather(&mut self, table: Var, rows: &[usize]) -> Var {
        let tv = self.value(table);
        let n = tv.rows();
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            panic!("gather: row {bad} out of range for {n} rows");
        }
        let value = tv.gather_rows(rows);
        self.push(value, Op::Gather(table, rows.to_vec()))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let value = self.value(a).clone().reshape(shape).expect("reshape preserves size");
        self.push(value, Op::Reshape(a))
    }

    /// Sum of several same-shape terms, left to right.
    pub fn add_all(&mut self, terms: &[Var]) -> Var {
        let mut acc = terms[0];
        for &t in &terms[1..] {
            acc = self.add(acc, t);
        }
        acc
    }

    /// Inverted dropout: keeps each entry with probability `1 - p` and
    /// scales survivors by `1 / (1 - p)`. Identity when `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, rng: &mut R) -> Var {
        if p <= 0.0 {
            return a;
        }
        let keep = 1.0 / (1.0 - p);
        let shape = self.shape(a).to_vec();
        let numel: usize = shape.iter().product();
        let mask: Vec<f64> =
            (0..numel).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect();
        let m = self.constant(Tensor::new(shape, mask).expect("valid shape"));
        self.mul(a, m)
    }

    /// Reverse sweep from a scalar `loss`. Gradients accumulate additively
    /// over multiple uses of a node, summed in recorded order.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let Some(node) = self.nodes.get(loss.0) else {
            return Err(Error::Graph(format!("loss node {} is not in this graph", loss.0)));
        };
        if node.value.len() != 1 {
            return Err(Error::Graph(format!(
                "loss must be scalar, got shape {:?}",
                node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(node.value.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Input = node.op {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads);
        }
        // Only leaves are reported.
        for (i, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Input) {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn slot<'a>(&self, grads: &'a mut [Option<Tensor>], v: Var) -> Option<&'a mut [f64]> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        Some(
            grads[v.0]
                .get_or_insert_with(|| Tensor::zeros(self.nodes[v.0].value.shape()))
                .data_mut(),
        )
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, f: impl Fn(usize) -> f64) {
        if let Some(dst) = self.slot(grads, v) {
            for (i, d) in dst.iter_mut().enumerate() {
                *d += f(i);
            }
        }
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        let y = out.data();
        match op {
            Op::Input => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if let Some(da) = self.slot(grads, *a) {
                    gemm(m, n, k, gd, false, bv.data(), true, da, 1.0);
                }
                if let Some(db) = self.slot(grads, *b) {
                    gemm(k, m, n, av.data(), true, gd, false, db, 1.0);
                }
            }
            Op::BatchMatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (bs, m, k, n) = (av.shape()[0], av.shape()[1], av.shape()[2], bv.shape()[2]);
                if let Some(da) = self.slot(grads, *a) {
                    for i in 0..bs {
                        gemm(
                            m,
                            n,
                            k,
                            &gd[i * m * n..(i + 1) * m * n],
                            false,
                            &bv.data()[i * k * n..(i + 1) * k * n],
                            true,
                            &mut da[i * m * k..(i + 1) * m * k],
                            1.0,
                        );
                    }
                }
                if let Some(db) = self.slot(grads, *b) {
                    for i in 0..bs {
                        gemm(
                            k,
                            m,
                            n,
                            &av.data()[i * m * k..(i + 1) * m * k],
                            true,
                            &gd[i * m * n..(i + 1) * m * n],
                            false,
                            &mut db[i * k * n..(i + 1) * k * n],
                            1.0,
                        );
                    }
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |i| gd[i]);
                self.accumulate(grads, *b, |i| gd[i]);
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |i| gd[i]);
                self.accumulate(grads, *b, |i| -gd[i]);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |i| gd[i] * bv[i]);
                self.accumulate(grads, *b, |i| gd[i] * av[i]);
            }
            Op::AddBias(a, bias) => {
                self.accumulate(grads, *a, |i| gd[i]);
                if let Some(db) = self.slot(grads, *bias) {
                    let cols = db.len();
                    for row in gd.chunks(cols) {
                        for (d, x) in db.iter_mut().zip(row) {
                            *d += x;
                        }
                    }
                }
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, |i| gd[i] * c),
            Op::AddScalar(a) | Op::Reshape(a) => self.accumulate(grads, *a, |i| gd[i]),
            Op::Tanh(a) => self.accumulate(grads, *a, |i| gd[i] * (1.0 - y[i] * y[i])),
            Op::Sigmoid(a) => self.accumulate(grads, *a, |i| gd[i] * y[i] * (1.0 - y[i])),
            Op::Exp(a) => self.accumulate(grads, *a, |i| gd[i] * y[i]),
            Op::Log(a) => {
                let x = self.value(*a).data();
                self.accumulate(grads, *a, |i| if x[i] >= LOG_FLOOR { gd[i] / x[i] } else { 0.0 });
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a).data();
                self.accumulate(grads, *a, |i| if x[i] >= *lo && x[i] <= *hi { gd[i] } else { 0.0 });
            }
            Op::Softmax(a) => {
                let cols = out.cols();
                if let Some(da) = self.slot(grads, *a) {
                    for ((yr, gr), dr) in y.chunks(cols).zip(gd.chunks(cols)).zip(da.chunks_mut(cols)) {
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for i in 0..cols {
                            dr[i] += yr[i] * (gr[i] - dot);
                        }
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let cols = out.cols();
                if let Some(da) = self.slot(grads, *a) {
                    for ((yr, gr), dr) in y.chunks(cols).zip(gd.chunks(cols)).zip(da.chunks_mut(cols)) {
                        let total: f64 = gr.iter().sum();
                        for i in 0..cols {
                            dr[i] += gr[i] - yr[i].exp() * total;
                        }
                    }
                }
            }
            Op::Concat(parts) => {
                let cols = out.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if let Some(dp) = self.slot(grads, p) {
                        for (r, dr) in dp.chunks_mut(w).enumerate() {
                            for (d, x) in dr.iter_mut().zip(&gd[r * cols + offset..r * cols + offset + w]) {
                                *d += x;
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::Slice(a, start, end) => {
                let w = end - start;
                let cols = self.value(*a).cols();
                if let Some(da) = self.slot(grads, *a) {
                    for (r, gr) in gd.chunks(w).enumerate() {
                        for (d, x) in da[r * cols + start..r * cols + end].iter_mut().zip(gr) {
                            *d += x;
                        }
                    }
                }
            }
            Op::Sum(a) => self.accumulate(grads, *a, |_| gd[0]),
            Op::Mean(a) => {
                let n = self.value(*a).len() as f64;
                self.accumulate(grads, *a, |_| gd[0] / n);
            }
            Op::Gather(table, rows) => {
                let cols = out.cols();
                if let Some(dt) = self.slot(grads, *table) {
                    for (gr, &r) in gd.chunks(cols).zip(rows) {
                        for (d, x) in dt[r * cols..(r + 1) * cols].iter_mut().zip(gr) {
                            *d += x;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![0.0, 0.0]));
        let s = g.softmax(a);
        assert_eq!(g.value(s).data(), &[0.5, 0.5]);

        let b = g.constant(Tensor::vector(vec![1000.0, 1000.0, 1000.0]));
        let s = g.softmax(b);
        for &p in g.value(s).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_matches_direct_evaluation() {
        // Direct e^x / sum e^x for small inputs, where no stabilization is
        // needed and every term is representable.
        let xs = [1.0f64, 2.0, 3.0];
        let denom: f64 = xs.iter().map(|x| x.exp()).sum();
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(xs.to_vec()));
        let s = g.softmax(a);
        for (p, x) in g.value(s).data().iter().zip(xs) {
            assert!((p - x.exp() / denom).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_softmax_zeroes_masked_entries() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(2, 3, vec![5.0, 1.0, 2.0, 0.0, 0.0, 9.0]));
        let s = g.masked_softmax(a, &[true, false, true, true, true, false]);
        let v = g.value(s).data();
        assert_eq!(v[1], 0.0);
        assert_eq!(v[5], 0.0);
        assert!((v[0] + v[2] - 1.0).abs() < 1e-15);
        assert_eq!(v[3], 0.5);
    }

    #[test]
    fn backward_quadratic_and_tanh() {
        let mut g = Graph::new();
        let w = g.input(Tensor::vector(vec![1.0, 2.0]), true);
        let sq = g.mul(w, w);
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[2.0, 4.0]);

        let mut g = Graph::new();
        let w = g.input(Tensor::vector(vec![0.0]), true);
        let t = g.tanh(w);
        let loss = g.sum(t);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_and_foreign_loss() {
        let mut g = Graph::new();
        let w = g.input(Tensor::vector(vec![1.0, 2.0]), true);
        let t = g.tanh(w);
        assert!(matches!(g.backward(t), Err(Error::Graph(_))));
        assert!(matches!(g.backward(Var(99)), Err(Error::Graph(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let w = g.input(Tensor::vector(vec![3.0]), true);
        let c = g.constant(Tensor::vector(vec![2.0]));
        let p = g.mul(w, c);
        let loss = g.sum(p);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[2.0]);
        assert!(grads.get(c).is_none());
    }

    #[test]
    fn log_clamps_tiny_inputs() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![0.0]));
        let l = g.log(a);
        assert!(g.value(l).is_finite());
        assert_eq!(g.value(l).item(), LOG_FLOOR.ln());
    }

    #[test]
    fn dropout_is_inverted() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut g = Graph::new();
        let a = g.constant(Tensor::full(&[1, 1000], 1.0));
        let d = g.dropout(a, 0.3, &mut rng);
        let v = g.value(d).data();
        assert!(v.iter().all(|&x| x == 0.0 || (x - 1.0 / 0.7).abs() < 1e-15));
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean - 1.0).abs() < 0.1);
        assert_eq!(g.dropout(a, 0.0, &mut rng), a);
    }
}
