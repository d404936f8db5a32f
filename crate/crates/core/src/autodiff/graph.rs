//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value. `backward` walks
//! the tape once in reverse and accumulates adjoints into the inputs of each
//! node. Nodes whose inputs are all untracked carry no adjoint.

use super::tensor::{numel, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Var },
    Relu(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Reshape(Var),
    /// Flat input offset of the winning element for every output element.
    Max { x: Var, source: Vec<usize> },
    Mean(Var),
    GatherRows { x: Var, rows: Vec<usize> },
    ConcatCols(Var, Var),
    ConcatRows(Vec<Var>),
    SoftmaxCe { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    op: Op,
    tracked: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    macs: u64,
}

/// Adjoints produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn mismatch(op: &'static str, left: &[usize], right: &[usize]) -> Error {
    Error::Shape {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, tracked: bool) -> Var {
        debug_assert_eq!(numel(&shape), data.len());
        self.nodes.push(Node {
            shape,
            data,
            op,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    /// Registers a tensor as a leaf. Tracked leaves receive gradients.
    pub fn leaf(&mut self, t: &Tensor, track: bool) -> Var {
        self.push(t.shape().to_vec(), t.values().to_vec(), Op::Leaf, track)
    }

    pub fn param(&mut self, t: &Tensor) -> Var {
        self.leaf(t, true)
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        let track = t.requires_grad();
        self.push(shape, t.into_values(), Op::Leaf, track)
    }

    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        Ok(self.input(Tensor::new(shape, data)?))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.data.clone()).expect("graph nodes hold valid shapes")
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.node(v).tracked
    }

    /// Multiply-adds performed by affine layers so far.
    pub fn macs(&self) -> u64 {
        self.macs
    }

    /// Bytes held by forward values on the tape, which all stay live until
    /// the backward pass.
    pub fn value_bytes(&self) -> u64 {
        self.nodes
            .iter()
            .map(|n| (n.data.len() * std::mem::size_of::<f64>()) as u64)
            .sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `out[b, o] = bias[o] + sum_i weight[o, i] * x[b, i]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(mismatch("linear", xs, ws));
        }
        if bs != [ws[0]] {
            return Err(mismatch("linear bias", ws, bs));
        }
        let (rows, in_dim, out_dim) = (xs[0], xs[1], ws[0]);
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let mut out = vec![0.0; rows * out_dim];
        for r in 0..rows {
            let xr = &xv[r * in_dim..(r + 1) * in_dim];
            let or = &mut out[r * out_dim..(r + 1) * out_dim];
            for (o, slot) in or.iter_mut().enumerate() {
                let wr = &wv[o * in_dim..(o + 1) * in_dim];
                let mut acc = bv[o];
                for i in 0..in_dim {
                    acc += wr[i] * xr[i];
                }
                *slot = acc;
            }
        }
        self.macs += (rows * in_dim * out_dim) as u64;
        let tracked = self.is_tracked(x) || self.is_tracked(w) || self.is_tracked(b);
        Ok(self.push(vec![rows, out_dim], out, Op::Linear { x, w, b }, tracked))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let data = self.value(x).iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let shape = self.shape(x).to_vec();
        let tracked = self.is_tracked(x);
        self.push(shape, data, Op::Relu(x), tracked)
    }

    fn elementwise(&mut self, a: Var, b: Var, op: &'static str) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(op, self.shape(a), self.shape(b)));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let data: Vec<f64> = match op {
            "add" => av.iter().zip(bv).map(|(p, q)| p + q).collect(),
            _ => av.iter().zip(bv).map(|(p, q)| p - q).collect(),
        };
        let shape = self.shape(a).to_vec();
        let tracked = self.is_tracked(a) || self.is_tracked(b);
        let node = if op == "add" { Op::Add(a, b) } else { Op::Sub(a, b) };
        Ok(self.push(shape, data, node, tracked))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "sub")
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.is_empty() || shape.contains(&0) || numel(&shape) != self.value(x).len() {
            return Err(mismatch("reshape", self.shape(x), &shape));
        }
        let data = self.value(x).to_vec();
        let tracked = self.is_tracked(x);
        Ok(self.push(shape, data, Op::Reshape(x), tracked))
    }

    /// Max over one axis, dropping it. Returns the winning position along the
    /// axis for every output element; ties go to the lowest position.
    pub fn max_pool(&mut self, x: Var, axis: usize) -> Result<(Var, Vec<usize>)> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Axis { axis, shape });
        }
        let len = shape[axis];
        if len == 0 {
            return Err(Error::EmptyAxis);
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let xv = self.value(x);
        let mut data = Vec::with_capacity(outer * inner);
        let mut source = Vec::with_capacity(outer * inner);
        let mut winners = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let base = o * len * inner;
            for i in 0..inner {
                let mut best = 0;
                let mut best_v = xv[base + i];
                for l in 1..len {
                    let v = xv[base + l * inner + i];
                    if v > best_v {
                        best_v = v;
                        best = l;
                    }
                }
                data.push(best_v);
                source.push(base + best * inner + i);
                winners.push(best);
            }
        }
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let tracked = self.is_tracked(x);
        let v = self.push(out_shape, data, Op::Max { x, source }, tracked);
        Ok((v, winners))
    }

    /// Row-wise max over consecutive row segments of a rank-2 tensor.
    pub fn segment_max(&mut self, x: Var, lengths: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 || lengths.iter().sum::<usize>() != shape[0] {
            return Err(mismatch("segment_max", &shape, &[lengths.iter().sum()]));
        }
        if lengths.contains(&0) {
            return Err(Error::EmptyAxis);
        }
        let cols = shape[1];
        let xv = self.value(x);
        let mut data = Vec::with_capacity(lengths.len() * cols);
        let mut source = Vec::with_capacity(lengths.len() * cols);
        let mut start = 0;
        for &len in lengths {
            for c in 0..cols {
                let mut best = start;
                let mut best_v = xv[start * cols + c];
                for r in start + 1..start + len {
                    let v = xv[r * cols + c];
                    if v > best_v {
                        best_v = v;
                        best = r;
                    }
                }
                data.push(best_v);
                source.push(best * cols + c);
            }
            start += len;
        }
        let tracked = self.is_tracked(x);
        Ok(self.push(vec![lengths.len(), cols], data, Op::Max { x, source }, tracked))
    }

    /// Mean over every element, as a one-element tensor.
    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let m = xv.iter().sum::<f64>() / xv.len() as f64;
        let tracked = self.is_tracked(x);
        self.push(vec![1], vec![m], Op::Mean(x), tracked)
    }

    pub fn gather_rows(&mut self, x: Var, rows: Vec<usize>) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 {
            return Err(mismatch("gather_rows", &shape, &[2]));
        }
        let cols = shape[1];
        if let Some(&bad) = rows.iter().find(|&&r| r >= shape[0]) {
            return Err(Error::Index {
                index: bad,
                len: shape[0],
            });
        }
        if rows.is_empty() {
            return Err(Error::EmptyAxis);
        }
        let xv = self.value(x);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in &rows {
            data.extend_from_slice(&xv[r * cols..(r + 1) * cols]);
        }
        let tracked = self.is_tracked(x);
        Ok(self.push(vec![rows.len(), cols], data, Op::GatherRows { x, rows }, tracked))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(mismatch("concat_cols", &sa, &sb));
        }
        let (rows, ca, cb) = (sa[0], sa[1], sb[1]);
        let (av, bv) = (self.value(a), self.value(b));
        let mut data = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            data.extend_from_slice(&av[r * ca..(r + 1) * ca]);
            data.extend_from_slice(&bv[r * cb..(r + 1) * cb]);
        }
        let tracked = self.is_tracked(a) || self.is_tracked(b);
        Ok(self.push(vec![rows, ca + cb], data, Op::ConcatCols(a, b), tracked))
    }

    /// Stacks rank-2 tensors with equal column counts along the rows.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::EmptyAxis)?;
        let cols = *self.shape(*first).last().unwrap_or(&0);
        let mut rows = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != 2 || s[1] != cols {
                return Err(mismatch("concat_rows", self.shape(*first), s));
            }
            rows += s[0];
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p));
        }
        let tracked = parts.iter().any(|&p| self.is_tracked(p));
        Ok(self.push(vec![rows, cols], data, Op::ConcatRows(parts.to_vec()), tracked))
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(mismatch("softmax_cross_entropy", &shape, &[labels.len()]));
        }
        let (batch, classes) = (shape[0], shape[1]);
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Label { label, classes });
        }
        let zv = self.value(logits);
        let mut probs = vec![0.0; batch * classes];
        let mut total = 0.0;
        for b in 0..batch {
            let row = &zv[b * classes..(b + 1) * classes];
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|z| (z - m).exp()).sum();
            let log_z = m + sum.ln();
            for c in 0..classes {
                probs[b * classes + c] = (row[c] - log_z).exp();
            }
            total += log_z - row[labels[b]];
        }
        let loss = total / batch as f64;
        let tracked = self.is_tracked(logits);
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::SoftmaxCe {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            tracked,
        ))
    }

    /// Reverse sweep seeded with d(output)/d(output) = 1. `output` must hold
    /// a single element.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.node(output);
        if out.data.len() != 1 {
            return Err(mismatch("backward", &out.shape, &[1]));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !out.tracked {
            return Ok(Gradients { grads });
        }
        grads[output.0] = Some(vec![1.0]);

        for id in (0..=output.0).rev() {
            let node = &self.nodes[id];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let tracked = |v: Var| self.nodes[v.0].tracked;
        let len = |v: Var| self.nodes[v.0].data.len();
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let xs = self.shape(*x);
                let (rows, in_dim) = (xs[0], xs[1]);
                let out_dim = node.shape[1];
                let xv = self.value(*x);
                let wv = self.value(*w);
                if tracked(*x) {
                    let dx = accumulate(&mut grads[x.0], len(*x));
                    for r in 0..rows {
                        for o in 0..out_dim {
                            let go = g[r * out_dim + o];
                            if go == 0.0 {
                                continue;
                            }
                            let wr = &wv[o * in_dim..(o + 1) * in_dim];
                            let dr = &mut dx[r * in_dim..(r + 1) * in_dim];
                            for i in 0..in_dim {
                                dr[i] += go * wr[i];
                            }
                        }
                    }
                }
                if tracked(*w) {
                    let dw = accumulate(&mut grads[w.0], len(*w));
                    for r in 0..rows {
                        let xr = &xv[r * in_dim..(r + 1) * in_dim];
                        for o in 0..out_dim {
                            let go = g[r * out_dim + o];
                            if go == 0.0 {
                                continue;
                            }
                            let dr = &mut dw[o * in_dim..(o + 1) * in_dim];
                            for i in 0..in_dim {
                                dr[i] += go * xr[i];
                            }
                        }
                    }
                }
                if tracked(*b) {
                    let db = accumulate(&mut grads[b.0], out_dim);
                    for r in 0..rows {
                        for o in 0..out_dim {
                            db[o] += g[r * out_dim + o];
                        }
                    }
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let dx = accumulate(&mut grads[x.0], len(*x));
                for ((d, &gi), &xi) in dx.iter_mut().zip(g).zip(xv) {
                    if xi > 0.0 {
                        *d += gi;
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if tracked(*a) {
                    let da = accumulate(&mut grads[a.0], g.len());
                    da.iter_mut().zip(g).for_each(|(d, gi)| *d += gi);
                }
                if tracked(*b) {
                    let db = accumulate(&mut grads[b.0], g.len());
                    db.iter_mut().zip(g).for_each(|(d, gi)| *d += sign * gi);
                }
            }
            Op::Reshape(x) => {
                let dx = accumulate(&mut grads[x.0], g.len());
                dx.iter_mut().zip(g).for_each(|(d, gi)| *d += gi);
            }
            Op::Max { x, source } => {
                let dx = accumulate(&mut grads[x.0], len(*x));
                for (&s, gi) in source.iter().zip(g) {
                    dx[s] += gi;
                }
            }
            Op::Mean(x) => {
                let n = len(*x);
                let share = g[0] / n as f64;
                let dx = accumulate(&mut grads[x.0], n);
                dx.iter_mut().for_each(|d| *d += share);
            }
            Op::GatherRows { x, rows } => {
                let cols = node.shape[1];
                let dx = accumulate(&mut grads[x.0], len(*x));
                for (k, &r) in rows.iter().enumerate() {
                    for c in 0..cols {
                        dx[r * cols + c] += g[k * cols + c];
                    }
                }
            }
            Op::ConcatCols(a, b) => {
                let rows = node.shape[0];
                let ca = self.shape(*a)[1];
                let cb = self.shape(*b)[1];
                let width = ca + cb;
                if tracked(*a) {
                    let da = accumulate(&mut grads[a.0], rows * ca);
                    for r in 0..rows {
                        for c in 0..ca {
                            da[r * ca + c] += g[r * width + c];
                        }
                    }
                }
                if tracked(*b) {
                    let db = accumulate(&mut grads[b.0], rows * cb);
                    for r in 0..rows {
                        for c in 0..cb {
                            db[r * cb + c] += g[r * width + ca + c];
                        }
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = len(p);
                    if tracked(p) {
                        let dp = accumulate(&mut grads[p.0], n);
                        dp.iter_mut()
                            .zip(&g[offset..offset + n])
                            .for_each(|(d, gi)| *d += gi);
                    }
                    offset += n;
                }
            }
            Op::SoftmaxCe {
                logits,
                labels,
                probs,
            } => {
                let batch = labels.len();
                let classes = probs.len() / batch;
                let scale = g[0] / batch as f64;
                let dz = accumulate(&mut grads[logits.0], probs.len());
                for b in 0..batch {
                    for c in 0..classes {
                        let target = if c == labels[b] { 1.0 } else { 0.0 };
                        dz[b * classes + c] += scale * (probs[b * classes + c] - target);
                    }
                }
            }
        }
    }
}
