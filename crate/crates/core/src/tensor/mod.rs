//! Dense `f64` arrays with tape-based reverse-mode differentiation.
//!
//! A [`Graph`] is built fresh for every forward pass. Values are computed
//! eagerly when an operation is recorded, so control flow (argmin selection,
//! greedy decoding) can inspect intermediate results while the tape grows.
//! [`Graph::backward`] then walks the tape once in reverse order.
//!
//! Broadcasting is limited to scalar-with-tensor.

mod gradcheck;

pub use gradcheck::{finite_difference_check, relative_error};

use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("numeric domain violation in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("shape {shape:?} does not hold {len} elements")]
    Shape { shape: Vec<usize>, len: usize },
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// A dense row-major array. Parameter tensors carry `requires_grad` and,
/// after an optimizer step has collected them, an accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) || shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::Shape {
                shape,
                len: data.len(),
            });
        }
        Ok(Self {
            shape,
            data: Arc::new(data),
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::new(shape.to_vec(), vec![0.0; n]).expect("zeros shape is consistent")
    }

    pub fn scalar(value: f64) -> Self {
        Self::new(vec![1], vec![value]).expect("scalar shape")
    }

    /// A `[1, n]` row vector.
    pub fn row(values: Vec<f64>) -> Self {
        let n = values.len();
        Self::new(vec![1, n], values).expect("row vector must be non-empty")
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn with_grad(mut self, requires_grad: bool) -> Self {
        self.requires_grad = requires_grad;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(TensorError::Dimension {
                op: "set_grad",
                lhs: self.shape.clone(),
                rhs: vec![grad.len()],
            });
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(TensorError::Contract(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    fn shared(&self) -> Arc<Vec<f64>> {
        Arc::clone(&self.data)
    }
}

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Sigmoid,
    Exp,
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(Binary, Var, Var),
    Unary(Unary, Var),
    Scale(Var, f64),
    Sum(Var),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
    GatherRow(Var, usize),
    Softmax(Var),
    // softmax probabilities cached in `aux`
    CrossEntropy(Var, usize),
    MaskedSum(Vec<Var>, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Arc<Vec<f64>>,
    op: Op,
    requires_grad: bool,
    aux: Option<Vec<f64>>,
}

/// Operation tape. Nodes are appended in creation order, which is a valid
/// topological order because every operation refers only to earlier nodes.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn as_matrix(shape: &[usize]) -> Option<(usize, usize)> {
    match shape {
        [r, c] => Some((*r, *c)),
        _ => None,
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

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        self.push_shared(shape, Arc::new(value), op, requires_grad, None)
    }

    fn push_shared(
        &mut self,
        shape: Vec<usize>,
        value: Arc<Vec<f64>>,
        op: Op,
        requires_grad: bool,
        aux: Option<Vec<f64>>,
    ) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
            aux,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Registers a tensor as a leaf. Gradients are tracked iff the tensor
    /// has `requires_grad` set. The data buffer is shared, not copied.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push_shared(t.shape.clone(), t.shared(), Op::Leaf, t.requires_grad, None)
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push_shared(t.shape.clone(), t.shared(), Op::Leaf, false, None)
    }

    pub fn constant_row(&mut self, values: &[f64]) -> Var {
        self.push(vec![1, values.len()], values.to_vec(), Op::Leaf, false)
    }

    pub fn constant_scalar(&mut self, value: f64) -> Var {
        self.push(vec![1], vec![value], Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn item(&self, v: Var) -> Result<f64> {
        let n = &self.nodes[v.0];
        if n.value.len() != 1 {
            return Err(TensorError::Contract(format!(
                "expected a scalar, got shape {:?}",
                n.shape
            )));
        }
        Ok(n.value[0])
    }

    /// Snapshot of a node as a detached tensor.
    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor {
            shape: n.shape.clone(),
            data: Arc::clone(&n.value),
            requires_grad: false,
            grad: None,
        }
    }

    /// Gradient accumulated on `v` by the last backward pass.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let dims = as_matrix(&sa).zip(as_matrix(&sb));
        let ((r, k), (k2, c)) = match dims {
            Some(d) if d.0 .1 == d.1 .0 => d,
            _ => {
                return Err(TensorError::Dimension {
                    op: "matmul",
                    lhs: sa,
                    rhs: sb,
                })
            }
        };
        debug_assert_eq!(k, k2);
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let orow = &mut out[i * c..(i + 1) * c];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * c..(p + 1) * c];
                for (o, &y) in orow.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![r, c], out, Op::MatMul(a, b), rg))
    }

    pub fn binary(&mut self, op: Binary, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let out_shape = if sa == sb || numel(sb) == 1 {
            sa.to_vec()
        } else if numel(sa) == 1 {
            sb.to_vec()
        } else {
            return Err(TensorError::Dimension {
                op: match op {
                    Binary::Add => "add",
                    Binary::Sub => "sub",
                    Binary::Mul => "mul",
                },
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        };
        let n = numel(&out_shape);
        let (av, bv) = (self.value(a), self.value(b));
        let at = |i: usize| if av.len() == 1 { av[0] } else { av[i] };
        let bt = |i: usize| if bv.len() == 1 { bv[0] } else { bv[i] };
        let out: Vec<f64> = (0..n)
            .map(|i| match op {
                Binary::Add => at(i) + bt(i),
                Binary::Sub => at(i) - bt(i),
                Binary::Mul => at(i) * bt(i),
            })
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out_shape, out, Op::Binary(op, a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn unary(&mut self, op: Unary, a: Var) -> Result<Var> {
        let av = self.value(a);
        if op == Unary::Log {
            if let Some(i) = av.iter().position(|&x| x.is_nan() || x <= 0.0) {
                return Err(TensorError::Domain {
                    op: "log",
                    detail: format!("element {i} is {}", av[i]),
                });
            }
        }
        let out: Vec<f64> = av
            .iter()
            .map(|&x| match op {
                Unary::Tanh => x.tanh(),
                Unary::Sigmoid => sigmoid(x),
                Unary::Exp => x.exp(),
                Unary::Log => x.ln(),
            })
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        Ok(self.push(shape, out, Op::Unary(op, a), rg))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a).expect("tanh is total")
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a).expect("sigmoid is total")
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Unary::Exp, a).expect("exp is total")
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Log, a)
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).iter().map(|&x| x * k).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        self.push(shape, out, Op::Scale(a, k), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        // fixed left-to-right order keeps reductions reproducible
        let s = self.value(a).iter().fold(0.0, |acc, &x| acc + x);
        let rg = self.rg(a);
        self.push(vec![1], vec![s], Op::Sum(a), rg)
    }

    /// Inner product of two equally shaped tensors.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::Dimension {
                op: "dot",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let p = self.mul(a, b)?;
        Ok(self.sum(p))
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Contract("concat of zero tensors".into()))?;
        let (rows, _) = as_matrix(self.shape(*first)).ok_or_else(|| TensorError::Dimension {
            op: "concat",
            lhs: self.shape(*first).to_vec(),
            rhs: vec![],
        })?;
        let mut cols = Vec::with_capacity(parts.len());
        for &p in parts {
            match as_matrix(self.shape(p)) {
                Some((r, c)) if r == rows => cols.push(c),
                _ => {
                    return Err(TensorError::Dimension {
                        op: "concat",
                        lhs: self.shape(*first).to_vec(),
                        rhs: self.shape(p).to_vec(),
                    })
                }
            }
        }
        let total: usize = cols.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &c) in parts.iter().zip(&cols) {
                out.extend_from_slice(&self.value(p)[r * c..(r + 1) * c]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(vec![rows, total], out, Op::Concat(parts.to_vec()), rg))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = as_matrix(self.shape(a)).ok_or_else(|| TensorError::Dimension {
            op: "slice_cols",
            lhs: self.shape(a).to_vec(),
            rhs: vec![start, end],
        })?;
        if start >= end || end > cols {
            return Err(TensorError::Index {
                index: end,
                len: cols,
            });
        }
        let w = end - start;
        let av = self.value(a);
        let mut out = Vec::with_capacity(rows * w);
        for r in 0..rows {
            out.extend_from_slice(&av[r * cols + start..r * cols + end]);
        }
        let rg = self.rg(a);
        Ok(self.push(vec![rows, w], out, Op::Slice(a, start, end), rg))
    }

    /// Row `index` of a matrix as a `[1, cols]` row vector (embedding lookup).
    pub fn gather_row(&mut self, table: Var, index: usize) -> Result<Var> {
        let (rows, cols) = as_matrix(self.shape(table)).ok_or_else(|| TensorError::Dimension {
            op: "gather_row",
            lhs: self.shape(table).to_vec(),
            rhs: vec![index],
        })?;
        if index >= rows {
            return Err(TensorError::Index { index, len: rows });
        }
        let out = self.value(table)[index * cols..(index + 1) * cols].to_vec();
        let rg = self.rg(table);
        Ok(self.push(vec![1, cols], out, Op::GatherRow(table, index), rg))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let shape = self.shape(a).to_vec();
        let cols = *shape.last().expect("tensor shapes are non-empty");
        let out: Vec<f64> = self
            .value(a)
            .chunks(cols)
            .flat_map(softmax_slice)
            .collect();
        let rg = self.rg(a);
        self.push(shape, out, Op::Softmax(a), rg)
    }

    /// `-log softmax(logits)[target]` over the flattened logits, computed with
    /// the max-shifted log-sum-exp.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let lv = self.value(logits);
        if target >= lv.len() {
            return Err(TensorError::Index {
                index: target,
                len: lv.len(),
            });
        }
        let max = lv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + lv.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        let loss = lse - lv[target];
        let probs = softmax_slice(lv);
        let rg = self.rg(logits);
        Ok(self.push_shared(
            vec![1],
            Arc::new(vec![loss]),
            Op::CrossEntropy(logits, target),
            rg,
            Some(probs),
        ))
    }

    /// `Σ mask_i · x_i` over scalar nodes. Entries with a zero mask receive
    /// exactly zero gradient and are not visited by the backward pass.
    pub fn masked_sum(&mut self, items: &[Var], mask: &[f64]) -> Result<Var> {
        if items.len() != mask.len() || items.is_empty() {
            return Err(TensorError::Dimension {
                op: "masked_sum",
                lhs: vec![items.len()],
                rhs: vec![mask.len()],
            });
        }
        let mut s = 0.0;
        for (&v, &m) in items.iter().zip(mask) {
            if self.value(v).len() != 1 {
                return Err(TensorError::Contract("masked_sum expects scalars".into()));
            }
            s += self.value(v)[0] * m;
        }
        let rg = items.iter().any(|&v| self.rg(v));
        Ok(self.push(
            vec![1],
            vec![s],
            Op::MaskedSum(items.to_vec(), mask.to_vec()),
            rg,
        ))
    }

    /// Reverse pass from a scalar loss with unit seed.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.backward_with_seeds(&[(loss, vec![1.0])])
    }

    /// Reverse pass seeded with arbitrary upstream gradients. Used when a
    /// node feeds a loss computed on a different graph.
    pub fn backward_with_seeds(&mut self, seeds: &[(Var, Vec<f64>)]) -> Result<()> {
        if self.backward_done {
            return Err(TensorError::Contract(
                "backward called twice without reset_grads".into(),
            ));
        }
        let mut last = 0;
        for (v, g) in seeds {
            if g.len() != self.value(*v).len() {
                return Err(TensorError::Dimension {
                    op: "backward seed",
                    lhs: self.shape(*v).to_vec(),
                    rhs: vec![g.len()],
                });
            }
            accumulate(&mut self.grads[v.0], g);
            last = last.max(v.0);
        }
        self.backward_done = true;
        for i in (0..=last).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    pub fn reset_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
        self.backward_done = false;
    }

    fn send(&mut self, v: Var, g: &[f64]) {
        if self.nodes[v.0].requires_grad {
            accumulate(&mut self.grads[v.0], g);
        }
    }

    fn send_with(&mut self, v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let n = self.nodes[v.0].value.len();
        let slot = self.grads[v.0].get_or_insert_with(|| vec![0.0; n]);
        f(slot);
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        // Op is moved out temporarily so sibling node values stay borrowable.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (r, k) = as_matrix(self.shape(*a)).unwrap();
                let c = self.shape(*b)[1];
                if self.rg(*a) {
                    let bv = Arc::clone(&self.nodes[b.0].value);
                    self.send_with(*a, |ga| {
                        for ii in 0..r {
                            let grow = &g[ii * c..(ii + 1) * c];
                            for p in 0..k {
                                let brow = &bv[p * c..(p + 1) * c];
                                ga[ii * k + p] +=
                                    grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                            }
                        }
                    });
                }
                if self.rg(*b) {
                    let av = Arc::clone(&self.nodes[a.0].value);
                    self.send_with(*b, |gb| {
                        for ii in 0..r {
                            let grow = &g[ii * c..(ii + 1) * c];
                            for p in 0..k {
                                let x = av[ii * k + p];
                                if x == 0.0 {
                                    continue;
                                }
                                let gbrow = &mut gb[p * c..(p + 1) * c];
                                for (o, &y) in gbrow.iter_mut().zip(grow) {
                                    *o += x * y;
                                }
                            }
                        }
                    });
                }
            }
            Op::Binary(kind, a, b) => {
                let av = Arc::clone(&self.nodes[a.0].value);
                let bv = Arc::clone(&self.nodes[b.0].value);
                let at = |j: usize| if av.len() == 1 { av[0] } else { av[j] };
                let bt = |j: usize| if bv.len() == 1 { bv[0] } else { bv[j] };
                let da: Vec<f64> = match kind {
                    Binary::Add | Binary::Sub => g.to_vec(),
                    Binary::Mul => g.iter().enumerate().map(|(j, &x)| x * bt(j)).collect(),
                };
                let db: Vec<f64> = match kind {
                    Binary::Add => g.to_vec(),
                    Binary::Sub => g.iter().map(|&x| -x).collect(),
                    Binary::Mul => g.iter().enumerate().map(|(j, &x)| x * at(j)).collect(),
                };
                let reduce = |d: Vec<f64>, len: usize| {
                    if len == 1 && d.len() != 1 {
                        vec![d.iter().sum()]
                    } else {
                        d
                    }
                };
                let da = reduce(da, av.len());
                let db = reduce(db, bv.len());
                self.send(*a, &da);
                self.send(*b, &db);
            }
            Op::Unary(kind, a) => {
                let out = Arc::clone(&self.nodes[i].value);
                let av = Arc::clone(&self.nodes[a.0].value);
                let d: Vec<f64> = g
                    .iter()
                    .enumerate()
                    .map(|(j, &x)| match kind {
                        Unary::Tanh => x * (1.0 - out[j] * out[j]),
                        Unary::Sigmoid => x * out[j] * (1.0 - out[j]),
                        Unary::Exp => x * out[j],
                        Unary::Log => x / av[j],
                    })
                    .collect();
                self.send(*a, &d);
            }
            Op::Scale(a, k) => {
                let d: Vec<f64> = g.iter().map(|&x| x * k).collect();
                self.send(*a, &d);
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                self.send(*a, &vec![g[0]; n]);
            }
            Op::Concat(parts) => {
                let rows = self.shape(parts[0])[0];
                let total = self.nodes[i].shape[1];
                let mut offset = 0;
                for &p in parts {
                    let c = self.shape(p)[1];
                    if self.rg(p) {
                        let mut d = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            d.extend_from_slice(&g[r * total + offset..r * total + offset + c]);
                        }
                        self.send(p, &d);
                    }
                    offset += c;
                }
            }
            Op::Slice(a, start, end) => {
                let (rows, cols) = as_matrix(self.shape(*a)).unwrap();
                let w = end - start;
                self.send_with(*a, |ga| {
                    for r in 0..rows {
                        for j in 0..w {
                            ga[r * cols + start + j] += g[r * w + j];
                        }
                    }
                });
            }
            Op::GatherRow(t, idx) => {
                let cols = self.shape(*t)[1];
                self.send_with(*t, |gt| {
                    for (o, &x) in gt[idx * cols..(idx + 1) * cols].iter_mut().zip(g) {
                        *o += x;
                    }
                });
            }
            Op::Softmax(a) => {
                let out = Arc::clone(&self.nodes[i].value);
                let cols = *self.nodes[i].shape.last().unwrap();
                let mut d = vec![0.0; g.len()];
                for ((dr, gr), yr) in d
                    .chunks_mut(cols)
                    .zip(g.chunks(cols))
                    .zip(out.chunks(cols))
                {
                    let inner: f64 = gr.iter().zip(yr).map(|(x, y)| x * y).sum();
                    for j in 0..cols {
                        dr[j] = yr[j] * (gr[j] - inner);
                    }
                }
                self.send(*a, &d);
            }
            Op::CrossEntropy(logits, target) => {
                let probs = self.nodes[i].aux.as_ref().unwrap();
                let mut d: Vec<f64> = probs.iter().map(|&p| p * g[0]).collect();
                d[*target] -= g[0];
                self.send(*logits, &d);
            }
            Op::MaskedSum(items, mask) => {
                for (&v, &m) in items.iter().zip(mask) {
                    if m != 0.0 {
                        self.send(v, &[g[0] * m]);
                    }
                }
            }
        }
        self.nodes[i].op = op;
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a += b),
        None => *slot = Some(g.to_vec()),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_slice(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|&x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}
