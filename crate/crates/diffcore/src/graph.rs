//! Tape of recorded operations and the reverse sweep over it.
//!
//! Nodes are appended in evaluation order, so the tape index order is a
//! topological order and the backward sweep is a single reverse scan.

use crate::{DiffError, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation kinds accepted by [`Graph::apply`].
///
/// Binary elementwise ops require equal shapes, or one operand holding a
/// single element (scalar-tensor broadcast). No other broadcasting exists.
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
    /// `[m, k] x [k, n] -> [m, n]`
    MatMul,
    Exp,
    Log,
    Tanh,
    Relu,
    Sqrt,
    Neg,
    Scale(f64),
    /// Elementwise clamp; gradient is zero outside `[lo, hi]`.
    Clamp { lo: f64, hi: f64 },
    Sum,
    Mean,
    /// Concatenate 1-D tensors (axis 0) or 2-D tensors along `axis`.
    Concat { axis: usize },
    /// Half-open range `[start, end)` along `axis` of a 1-D or 2-D tensor.
    Slice { axis: usize, start: usize, end: usize },
    Reshape(Vec<usize>),
    /// Pick flattened elements by index; the result takes `shape`.
    Gather { indices: Vec<usize>, shape: Vec<usize> },
    StopGradient,
}

impl OpKind {
    fn name(&self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::MatMul => "matmul",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Tanh => "tanh",
            OpKind::Relu => "relu",
            OpKind::Sqrt => "sqrt",
            OpKind::Neg => "neg",
            OpKind::Scale(_) => "scale",
            OpKind::Clamp { .. } => "clamp",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::Concat { .. } => "concat",
            OpKind::Slice { .. } => "slice",
            OpKind::Reshape(_) => "reshape",
            OpKind::Gather { .. } => "gather",
            OpKind::StopGradient => "stop_gradient",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div | OpKind::MatMul => Some(2),
            OpKind::Concat { .. } => None,
            _ => Some(1),
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    kind: Option<OpKind>,
    inputs: Vec<Var>,
    requires_grad: bool,
    finite: bool,
}

/// Recording tape. Build one per forward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    poisoned: Option<(usize, &'static str)>,
}

/// Gradients of a scalar loss with respect to every node that requires grad.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<Tensor> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Some(Tensor::new(self.shapes[v.0].clone(), g.clone()).expect("gradient shape"))
    }

    /// Gradient of `v`, zero-filled when nothing reached it.
    pub fn wrt(&self, v: Var) -> Tensor {
        self.get(v)
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

fn broadcast_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Vec<usize>, DiffError> {
    if a.shape() == b.shape() {
        Ok(a.shape().to_vec())
    } else if a.len() == 1 && b.len() == 1 {
        // two single elements: keep the higher-rank shape
        Ok(if b.shape().len() > a.shape().len() { b.shape() } else { a.shape() }.to_vec())
    } else if b.is_scalar() {
        Ok(a.shape().to_vec())
    } else if a.is_scalar() {
        Ok(b.shape().to_vec())
    } else {
        Err(DiffError::contract(
            op,
            format!("shapes {:?} and {:?} do not conform", a.shape(), b.shape()),
        ))
    }
}

fn binary(a: &Tensor, b: &Tensor, n: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let (ad, bd) = (a.data(), b.data());
    let ai = |i: usize| if ad.len() == 1 { ad[0] } else { ad[i] };
    let bi = |i: usize| if bd.len() == 1 { bd[0] } else { bd[i] };
    (0..n).map(|i| f(ai(i), bi(i))).collect()
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// `a [m, n] * b^T` for `b [k, n]`.
fn matmul_bt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m * k);
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out.push(arow.iter().zip(brow).map(|(x, y)| x * y).sum());
        }
    }
    out
}

/// `a^T * b` for `a [m, k]`, `b [m, n]`.
fn matmul_at(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            for (o, &bv) in out[p * n..(p + 1) * n].iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

fn dims2(t: &Tensor) -> (usize, usize) {
    match t.shape() {
        [n] => (*n, 1),
        [r, c] => (*r, *c),
        _ => (0, 0),
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, kind: Option<OpKind>, inputs: Vec<Var>, requires_grad: bool) -> Var {
        let finite = value.is_finite();
        self.nodes.push(Node {
            finite,
            value,
            kind,
            inputs,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, None, Vec::new(), true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, None, Vec::new(), false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Record `kind` applied to `inputs`.
    ///
    /// Fails on shape or domain violations, and when finite inputs produce a
    /// non-finite result.
    pub fn apply(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var, DiffError> {
        self.record(kind, inputs, true)
    }

    /// Index and op name of the first recorded node holding a non-finite
    /// value, if any. Only the convenience methods can record such nodes.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.poisoned
    }

    fn record(&mut self, kind: OpKind, inputs: &[Var], strict: bool) -> Result<Var, DiffError> {
        let op = kind.name();
        if let Some(n) = kind.arity() {
            if inputs.len() != n {
                return Err(DiffError::contract(
                    op,
                    format!("expected {n} inputs, got {}", inputs.len()),
                ));
            }
        } else if inputs.is_empty() {
            return Err(DiffError::contract(op, "no inputs"));
        }
        let value = self.evaluate(&kind, inputs)?;
        let inputs_finite = inputs.iter().all(|v| self.nodes[v.0].finite);
        if inputs_finite && !value.is_finite() {
            if strict {
                return Err(DiffError::NonFinite { op });
            }
            if self.poisoned.is_none() {
                self.poisoned = Some((self.nodes.len(), op));
            }
        }
        let requires_grad = kind != OpKind::StopGradient
            && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, Some(kind), inputs.to_vec(), requires_grad))
    }

    fn evaluate(&self, kind: &OpKind, inputs: &[Var]) -> Result<Tensor, DiffError> {
        let op = kind.name();
        let x = &self.nodes[inputs[0].0].value;
        let unary = |f: &dyn Fn(f64) -> f64| x.map(f);
        let out = match kind {
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div => {
                let y = &self.nodes[inputs[1].0].value;
                let shape = broadcast_shape(op, x, y)?;
                let n = shape.iter().product();
                let data = match kind {
                    OpKind::Add => binary(x, y, n, |a, b| a + b),
                    OpKind::Sub => binary(x, y, n, |a, b| a - b),
                    OpKind::Mul => binary(x, y, n, |a, b| a * b),
                    _ => binary(x, y, n, |a, b| a / b),
                };
                Tensor::new(shape, data)?
            }
            OpKind::MatMul => {
                let y = &self.nodes[inputs[1].0].value;
                if x.shape().len() != 2 || y.shape().len() != 2 || x.cols() != y.rows() {
                    return Err(DiffError::contract(
                        op,
                        format!("cannot multiply {:?} by {:?}", x.shape(), y.shape()),
                    ));
                }
                let (m, k, n) = (x.rows(), x.cols(), y.cols());
                Tensor::matrix(m, n, matmul_raw(x.data(), y.data(), m, k, n))
            }
            OpKind::Exp => unary(&f64::exp),
            OpKind::Log => {
                if let Some(bad) = x.data().iter().find(|&&v| v <= 0.0) {
                    return Err(DiffError::Domain {
                        op,
                        detail: format!("log of non-positive value {bad}"),
                    });
                }
                unary(&f64::ln)
            }
            OpKind::Tanh => unary(&f64::tanh),
            OpKind::Relu => unary(&|v| v.max(0.0)),
            OpKind::Sqrt => {
                if let Some(bad) = x.data().iter().find(|&&v| v < 0.0) {
                    return Err(DiffError::Domain {
                        op,
                        detail: format!("sqrt of negative value {bad}"),
                    });
                }
                unary(&f64::sqrt)
            }
            OpKind::Neg => unary(&|v| -v),
            OpKind::Scale(c) => unary(&|v| c * v),
            OpKind::Clamp { lo, hi } => {
                if lo > hi {
                    return Err(DiffError::contract(op, format!("empty range [{lo}, {hi}]")));
                }
                unary(&|v| v.clamp(*lo, *hi))
            }
            OpKind::Sum => Tensor::scalar(x.data().iter().sum()),
            OpKind::Mean => Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64),
            OpKind::Concat { axis } => self.eval_concat(*axis, inputs)?,
            OpKind::Slice { axis, start, end } => {
                let (r, c) = dims2(x);
                let ok = x.shape().len() <= 2
                    && start < end
                    && match (axis, x.shape().len()) {
                        (0, _) => *end <= r,
                        (1, 2) => *end <= c,
                        _ => false,
                    };
                if !ok {
                    return Err(DiffError::contract(
                        op,
                        format!("range {start}..{end} on axis {axis} of {:?}", x.shape()),
                    ));
                }
                let idx = slice_indices(x.shape(), *axis, *start, *end);
                let data = idx.iter().map(|&i| x.data()[i]).collect();
                let mut shape = x.shape().to_vec();
                shape[*axis] = end - start;
                Tensor::new(shape, data)?
            }
            OpKind::Reshape(shape) => Tensor::new(shape.clone(), x.data().to_vec())?,
            OpKind::Gather { indices, shape } => {
                if let Some(bad) = indices.iter().find(|&&i| i >= x.len()) {
                    return Err(DiffError::contract(
                        op,
                        format!("index {bad} out of range for {} elements", x.len()),
                    ));
                }
                Tensor::new(shape.clone(), indices.iter().map(|&i| x.data()[i]).collect())?
            }
            OpKind::StopGradient => x.clone(),
        };
        Ok(out)
    }

    fn eval_concat(&self, axis: usize, inputs: &[Var]) -> Result<Tensor, DiffError> {
        let parts: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
        let rank = parts[0].shape().len();
        if parts.iter().any(|p| p.shape().len() != rank) || rank > 2 || axis >= rank {
            return Err(DiffError::contract("concat", "inputs must share rank 1 or 2 and a valid axis"));
        }
        if rank == 1 {
            let data: Vec<f64> = parts.iter().flat_map(|p| p.data().iter().copied()).collect();
            return Tensor::new(vec![data.len()], data);
        }
        if axis == 0 {
            let c = parts[0].cols();
            if parts.iter().any(|p| p.cols() != c) {
                return Err(DiffError::contract("concat", "column counts differ"));
            }
            let data: Vec<f64> = parts.iter().flat_map(|p| p.data().iter().copied()).collect();
            let r = data.len() / c;
            return Tensor::new(vec![r, c], data);
        }
        let r = parts[0].rows();
        if parts.iter().any(|p| p.rows() != r) {
            return Err(DiffError::contract("concat", "row counts differ"));
        }
        let c: usize = parts.iter().map(|p| p.cols()).sum();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for p in &parts {
                let pc = p.cols();
                data.extend_from_slice(&p.data()[i * pc..(i + 1) * pc]);
            }
        }
        Tensor::new(vec![r, c], data)
    }

    fn checked(&mut self, kind: OpKind, inputs: &[Var]) -> Var {
        match self.record(kind, inputs, false) {
            Ok(v) => v,
            Err(e) => panic!("{e}"),
        }
    }

    // Convenience wrappers. They panic on contract and domain violations and
    // record non-finite results (see `first_non_finite`); use `apply` for a
    // fallible call.

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.checked(OpKind::Add, &[a, b])
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.checked(OpKind::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.checked(OpKind::Mul, &[a, b])
    }
    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.checked(OpKind::Div, &[a, b])
    }
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.checked(OpKind::MatMul, &[a, b])
    }
    pub fn exp(&mut self, a: Var) -> Var {
        self.checked(OpKind::Exp, &[a])
    }
    pub fn log(&mut self, a: Var) -> Var {
        self.checked(OpKind::Log, &[a])
    }
    pub fn tanh(&mut self, a: Var) -> Var {
        self.checked(OpKind::Tanh, &[a])
    }
    pub fn relu(&mut self, a: Var) -> Var {
        self.checked(OpKind::Relu, &[a])
    }
    pub fn sqrt(&mut self, a: Var) -> Var {
        self.checked(OpKind::Sqrt, &[a])
    }
    pub fn neg(&mut self, a: Var) -> Var {
        self.checked(OpKind::Neg, &[a])
    }
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.checked(OpKind::Scale(c), &[a])
    }
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.checked(OpKind::Clamp { lo, hi }, &[a])
    }
    pub fn sum(&mut self, a: Var) -> Var {
        self.checked(OpKind::Sum, &[a])
    }
    pub fn mean(&mut self, a: Var) -> Var {
        self.checked(OpKind::Mean, &[a])
    }
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Var {
        self.checked(OpKind::Concat { axis }, parts)
    }
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Var {
        self.checked(OpKind::Slice { axis, start, end }, &[a])
    }
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        self.checked(OpKind::Reshape(shape.to_vec()), &[a])
    }
    pub fn gather(&mut self, a: Var, indices: Vec<usize>, shape: &[usize]) -> Var {
        self.checked(
            OpKind::Gather {
                indices,
                shape: shape.to_vec(),
            },
            &[a],
        )
    }
    pub fn stop_gradient(&mut self, a: Var) -> Var {
        self.checked(OpKind::StopGradient, &[a])
    }

    /// `a * a`
    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    /// Sum of squares.
    pub fn sum_sq(&mut self, a: Var) -> Var {
        let sq = self.square(a);
        self.sum(sq)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let s = self.scalar(c);
        self.add(a, s)
    }

    /// Repeat a `[1, n]` row `rows` times, expressed as a product with a
    /// ones column so the gradient rule stays the matmul rule.
    pub fn repeat_rows(&mut self, row: Var, rows: usize) -> Var {
        let ones = self.constant(Tensor::ones(&[rows, 1]));
        self.matmul(ones, row)
    }

    /// Row sums of a `[m, n]` matrix as `[m, 1]`.
    pub fn row_sums(&mut self, a: Var) -> Var {
        let n = self.value(a).cols();
        let ones = self.constant(Tensor::ones(&[n, 1]));
        self.matmul(a, ones)
    }

    /// Columns `cols` of a `[rows, c]` matrix, as `[rows, cols.len()]`.
    pub fn select_cols(&mut self, x: Var, cols: &[usize]) -> Var {
        let (rows, c) = (self.value(x).rows(), self.value(x).cols());
        let idx = (0..rows)
            .flat_map(|r| cols.iter().map(move |&k| r * c + k))
            .collect();
        self.gather(x, idx, &[rows, cols.len()])
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, DiffError> {
        let n_nodes = self.nodes.len();
        if loss.0 >= n_nodes {
            return Err(DiffError::contract("backward", "loss is not on this graph"));
        }
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(DiffError::contract(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.nodes[loss.0].value.shape()),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n_nodes];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Some(kind) = &node.kind else { continue };
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(kind, node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.requires_grad {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, kind: &OpKind, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let ins = &node.inputs;
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let acc = |grads: &mut [Option<Vec<f64>>], v: Var, contrib: Vec<f64>| {
            let slot = &mut grads[v.0];
            let target_len = self.nodes[v.0].value.len();
            let contrib = if contrib.len() != target_len {
                // scalar operand broadcast into a larger result
                debug_assert_eq!(target_len, 1);
                vec![contrib.iter().sum()]
            } else {
                contrib
            };
            match slot {
                Some(existing) => {
                    for (e, c) in existing.iter_mut().zip(contrib) {
                        *e += c;
                    }
                }
                None => *slot = Some(contrib),
            }
        };
        let pick = |t: &Tensor, i: usize| if t.len() == 1 { t.data()[0] } else { t.data()[i] };
        match kind {
            OpKind::Add | OpKind::Sub => {
                let sign = if *kind == OpKind::Add { 1.0 } else { -1.0 };
                if wants(ins[0]) {
                    acc(grads, ins[0], g.to_vec());
                }
                if wants(ins[1]) {
                    acc(grads, ins[1], g.iter().map(|x| sign * x).collect());
                }
            }
            OpKind::Mul => {
                let (a, b) = (val(ins[0]), val(ins[1]));
                if wants(ins[0]) {
                    acc(grads, ins[0], g.iter().enumerate().map(|(i, x)| x * pick(b, i)).collect());
                }
                if wants(ins[1]) {
                    acc(grads, ins[1], g.iter().enumerate().map(|(i, x)| x * pick(a, i)).collect());
                }
            }
            OpKind::Div => {
                let (a, b) = (val(ins[0]), val(ins[1]));
                if wants(ins[0]) {
                    acc(grads, ins[0], g.iter().enumerate().map(|(i, x)| x / pick(b, i)).collect());
                }
                if wants(ins[1]) {
                    acc(
                        grads,
                        ins[1],
                        g.iter()
                            .enumerate()
                            .map(|(i, x)| {
                                let bi = pick(b, i);
                                -x * pick(a, i) / (bi * bi)
                            })
                            .collect(),
                    );
                }
            }
            OpKind::MatMul => {
                let (a, b) = (val(ins[0]), val(ins[1]));
                let (m, k, n) = (a.rows(), a.cols(), b.cols());
                if wants(ins[0]) {
                    acc(grads, ins[0], matmul_bt(g, b.data(), m, n, k));
                }
                if wants(ins[1]) {
                    acc(grads, ins[1], matmul_at(a.data(), g, m, k, n));
                }
            }
            OpKind::Exp => {
                let out = node.value.data();
                acc(grads, ins[0], g.iter().zip(out).map(|(x, o)| x * o).collect());
            }
            OpKind::Log => {
                let a = val(ins[0]).data();
                acc(grads, ins[0], g.iter().zip(a).map(|(x, v)| x / v).collect());
            }
            OpKind::Tanh => {
                let out = node.value.data();
                acc(grads, ins[0], g.iter().zip(out).map(|(x, o)| x * (1.0 - o * o)).collect());
            }
            OpKind::Relu => {
                let a = val(ins[0]).data();
                acc(
                    grads,
                    ins[0],
                    g.iter().zip(a).map(|(x, v)| if *v > 0.0 { *x } else { 0.0 }).collect(),
                );
            }
            OpKind::Sqrt => {
                let out = node.value.data();
                acc(grads, ins[0], g.iter().zip(out).map(|(x, o)| 0.5 * x / o).collect());
            }
            OpKind::Neg => acc(grads, ins[0], g.iter().map(|x| -x).collect()),
            OpKind::Scale(c) => acc(grads, ins[0], g.iter().map(|x| c * x).collect()),
            OpKind::Clamp { lo, hi } => {
                let a = val(ins[0]).data();
                acc(
                    grads,
                    ins[0],
                    g.iter()
                        .zip(a)
                        .map(|(x, v)| if v >= lo && v <= hi { *x } else { 0.0 })
                        .collect(),
                );
            }
            OpKind::Sum => {
                let n = val(ins[0]).len();
                acc(grads, ins[0], vec![g[0]; n]);
            }
            OpKind::Mean => {
                let n = val(ins[0]).len();
                acc(grads, ins[0], vec![g[0] / n as f64; n]);
            }
            OpKind::Concat { axis } => {
                let rank = node.value.shape().len();
                if rank == 1 || *axis == 0 {
                    let mut offset = 0;
                    for &v in ins {
                        let len = val(v).len();
                        if wants(v) {
                            acc(grads, v, g[offset..offset + len].to_vec());
                        }
                        offset += len;
                    }
                } else {
                    let rows = node.value.rows();
                    let total = node.value.cols();
                    let mut col = 0;
                    for &v in ins {
                        let pc = val(v).cols();
                        if wants(v) {
                            let mut part = Vec::with_capacity(rows * pc);
                            for i in 0..rows {
                                part.extend_from_slice(&g[i * total + col..i * total + col + pc]);
                            }
                            acc(grads, v, part);
                        }
                        col += pc;
                    }
                }
            }
            OpKind::Slice { axis, start, end } => {
                let src = val(ins[0]);
                let idx = slice_indices(src.shape(), *axis, *start, *end);
                let mut full = vec![0.0; src.len()];
                for (&i, x) in idx.iter().zip(g) {
                    full[i] += x;
                }
                acc(grads, ins[0], full);
            }
            OpKind::Reshape(_) => acc(grads, ins[0], g.to_vec()),
            OpKind::Gather { indices, .. } => {
                let mut full = vec![0.0; val(ins[0]).len()];
                for (&i, x) in indices.iter().zip(g) {
                    full[i] += x;
                }
                acc(grads, ins[0], full);
            }
            OpKind::StopGradient => {}
        }
    }
}

fn slice_indices(shape: &[usize], axis: usize, start: usize, end: usize) -> Vec<usize> {
    if shape.len() == 1 {
        return (start..end).collect();
    }
    let (r, c) = (shape[0], shape[1]);
    if axis == 0 {
        (start * c..end * c).collect()
    } else {
        (0..r)
            .flat_map(|i| (start..end).map(move |j| i * c + j))
            .collect()
    }
}
