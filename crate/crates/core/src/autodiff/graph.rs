//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] is rebuilt for every evaluation. Nodes are appended in
//! evaluation order, so walking the tape backwards is a valid reverse
//! topological traversal. Row-wise operations treat a rank-1 array as a
//! single row and keep its shape.

use std::collections::BTreeMap;

use super::array::{dot, matmul_nt_raw, matmul_raw, matmul_tn_raw, DenseArray};
use crate::error::{Error, Result};

/// Guard below which a vector is considered to have no direction.
pub const NORM_EPS: f64 = 1e-12;

/// Handle to a node on a [`Graph`] tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation tag of a node, used for diagnostics and fault injection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Constant,
    Param,
    MatMul,
    MatMulNt,
    MatMulTn,
    Transpose,
    Add,
    AddRow,
    Sub,
    Mul,
    Scale,
    AddScalar,
    Relu,
    Exp,
    Log,
    Softmax,
    LogSoftmax,
    L2Normalize,
    LogSumExp,
    RowDot,
    Sum,
    Mean,
    ConcatCols,
    SelectCols,
    SelectRows,
}

impl OpKind {
    const NAMES: [(OpKind, &'static str); 25] = [
        (OpKind::Constant, "constant"),
        (OpKind::Param, "param"),
        (OpKind::MatMul, "matmul"),
        (OpKind::MatMulNt, "matmul_nt"),
        (OpKind::MatMulTn, "matmul_tn"),
        (OpKind::Transpose, "transpose"),
        (OpKind::Add, "add"),
        (OpKind::AddRow, "add_row"),
        (OpKind::Sub, "sub"),
        (OpKind::Mul, "mul"),
        (OpKind::Scale, "scale"),
        (OpKind::AddScalar, "add_scalar"),
        (OpKind::Relu, "relu"),
        (OpKind::Exp, "exp"),
        (OpKind::Log, "log"),
        (OpKind::Softmax, "softmax"),
        (OpKind::LogSoftmax, "log_softmax"),
        (OpKind::L2Normalize, "l2_normalize"),
        (OpKind::LogSumExp, "log_sum_exp"),
        (OpKind::RowDot, "row_dot"),
        (OpKind::Sum, "sum"),
        (OpKind::Mean, "mean"),
        (OpKind::ConcatCols, "concat_cols"),
        (OpKind::SelectCols, "select_cols"),
        (OpKind::SelectRows, "select_rows"),
    ];

    /// Snake-case name, e.g. `l2_normalize`.
    pub fn name(self) -> &'static str {
        Self::NAMES.iter().find(|(k, _)| *k == self).map(|(_, n)| *n).unwrap_or("?")
    }
}

impl std::str::FromStr for OpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::NAMES
            .iter()
            .find(|(_, n)| *n == s)
            .map(|(k, _)| *k)
            .ok_or_else(|| Error::Config(format!("unknown operation `{s}`")))
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    MatMulTn(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Softmax(Var),
    LogSoftmax(Var),
    L2Normalize(Var, Vec<f64>),
    LogSumExp(Var, Option<Vec<bool>>),
    RowDot(Var, Var),
    Sum(Var),
    Mean(Var),
    ConcatCols(Var, Var),
    SelectCols(Var, Vec<usize>),
    SelectRows(Var, Vec<usize>),
}

#[derive(Clone, Debug)]
struct Node {
    value: DenseArray,
    op: Op,
    kind: OpKind,
    requires_grad: bool,
    grad: Option<DenseArray>,
}

/// Parameter gradients keyed by parameter name.
pub type Gradients = BTreeMap<String, DenseArray>;

/// A single-use computation tape.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
    backward_done: bool,
    fault: Option<OpKind>,
}

fn row_view(shape: &[usize]) -> Result<(usize, usize)> {
    match shape.len() {
        0 => Ok((1, 1)),
        1 => Ok((1, shape[0])),
        2 => Ok((shape[0], shape[1])),
        _ => Err(Error::shape("row view", shape, &[])),
    }
}

/// Shape of a per-row reduction: scalar for vectors, `m×1` for matrices.
fn reduced_shape(shape: &[usize], rows: usize) -> Vec<usize> {
    if shape.len() == 2 {
        vec![rows, 1]
    } else {
        Vec::new()
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

    /// Makes the backward rule of `kind` scale its gradient by a wrong
    /// factor. Gradient-check negative controls use this to prove the
    /// checker catches a broken rule.
    pub fn inject_backward_fault(&mut self, kind: OpKind) {
        self.fault = Some(kind);
    }

    pub fn value(&self, v: Var) -> &DenseArray {
        &self.nodes[v.0].value
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].kind
    }

    /// Accumulated gradient of a node after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&DenseArray> {
        self.nodes[v.0].grad.as_ref()
    }

    fn push(&mut self, value: DenseArray, op: Op, kind: OpKind, parents: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFiniteInput {
                context: format!("{kind:?} output"),
            });
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            kind,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn leaf(&mut self, value: DenseArray, kind: OpKind, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFiniteInput {
                context: format!("{kind:?} leaf"),
            });
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            kind,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, value: DenseArray) -> Result<Var> {
        self.leaf(value, OpKind::Constant, false)
    }

    /// A named trainable leaf. Binding the same name twice returns the
    /// existing node so gradients from every use accumulate in one place.
    pub fn param(&mut self, name: &str, value: &DenseArray) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let v = self.leaf(value.clone(), OpKind::Param, true)?;
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn param_var(&self, name: &str) -> Option<Var> {
        self.params.get(name).copied()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = row_view(self.value(a).shape())?;
        let (k2, n) = row_view(self.value(b).shape())?;
        if k != k2 {
            return Err(Error::shape("matmul", self.value(a).shape(), self.value(b).shape()));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let value = DenseArray::matrix(m, n, out)?;
        self.push(value, Op::MatMul(a, b), OpKind::MatMul, &[a, b])
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = row_view(self.value(a).shape())?;
        let (n, k2) = row_view(self.value(b).shape())?;
        if k != k2 {
            return Err(Error::shape("matmul_nt", self.value(a).shape(), self.value(b).shape()));
        }
        let out = matmul_nt_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let value = DenseArray::matrix(m, n, out)?;
        self.push(value, Op::MatMulNt(a, b), OpKind::MatMulNt, &[a, b])
    }

    /// `aᵀ · b`.
    pub fn matmul_tn(&mut self, a: Var, b: Var) -> Result<Var> {
        let (k, m) = row_view(self.value(a).shape())?;
        let (k2, n) = row_view(self.value(b).shape())?;
        if k != k2 {
            return Err(Error::shape("matmul_tn", self.value(a).shape(), self.value(b).shape()));
        }
        let out = matmul_tn_raw(self.value(a).data(), self.value(b).data(), k, m, n);
        let value = DenseArray::matrix(m, n, out)?;
        self.push(value, Op::MatMulTn(a, b), OpKind::MatMulTn, &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        row_view(self.value(a).shape())?;
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a), OpKind::Transpose, &[a])
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, sa, sb));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> DenseArray {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        DenseArray::new(va.shape().to_vec(), data).expect("shape checked")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.zip_with(a, b, |x, y| x + y);
        self.push(value, Op::Add(a, b), OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.zip_with(a, b, |x, y| x - y);
        self.push(value, Op::Sub(a, b), OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.zip_with(a, b, |x, y| x * y);
        self.push(value, Op::Mul(a, b), OpKind::Mul, &[a, b])
    }

    /// Adds a length-`n` row to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = row_view(self.value(a).shape())?;
        if self.value(row).len() != n {
            return Err(Error::shape("add_row", self.value(a).shape(), self.value(row).shape()));
        }
        let mut value = self.value(a).clone();
        let bias = self.value(row).data().to_vec();
        for i in 0..m {
            for (o, b) in value.row_mut(i).iter_mut().zip(&bias) {
                *o += b;
            }
        }
        self.push(value, Op::AddRow(a, row), OpKind::AddRow, &[a, row])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.value(a).map(|v| v * c);
        self.push(value, Op::Scale(a, c), OpKind::Scale, &[a])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.value(a).map(|v| v + c);
        self.push(value, Op::AddScalar(a), OpKind::AddScalar, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|v| v.max(0.0));
        self.push(value, Op::Relu(a), OpKind::Relu, &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(f64::exp);
        self.push(value, Op::Exp(a), OpKind::Exp, &[a])
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(f64::ln);
        self.push(value, Op::Log(a), OpKind::Log, &[a])
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let (m, _) = row_view(self.value(a).shape())?;
        let mut value = self.value(a).clone();
        for i in 0..m {
            softmax_in_place(value.row_mut(i));
        }
        self.push(value, Op::Softmax(a), OpKind::Softmax, &[a])
    }

    /// Row-wise log-softmax, `x - logsumexp(x)`.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let (m, _) = row_view(self.value(a).shape())?;
        let mut value = self.value(a).clone();
        for i in 0..m {
            let row = value.row_mut(i);
            let lse = log_sum_exp(row);
            row.iter_mut().for_each(|v| *v -= lse);
        }
        self.push(value, Op::LogSoftmax(a), OpKind::LogSoftmax, &[a])
    }

    /// Scales every row to unit L2 norm. Fails with `DegenerateNorm` when a
    /// row's norm does not exceed [`NORM_EPS`].
    pub fn l2_normalize(&mut self, a: Var) -> Result<Var> {
        let (m, _) = row_view(self.value(a).shape())?;
        let mut value = self.value(a).clone();
        let mut norms = Vec::with_capacity(m);
        for i in 0..m {
            let row = value.row_mut(i);
            let norm = dot(row, row).sqrt();
            if norm <= NORM_EPS || !norm.is_finite() {
                return Err(Error::DegenerateNorm {
                    norm,
                    eps: NORM_EPS,
                    context: format!("l2_normalize row {i}"),
                });
            }
            row.iter_mut().for_each(|v| *v /= norm);
            norms.push(norm);
        }
        self.push(value, Op::L2Normalize(a, norms), OpKind::L2Normalize, &[a])
    }

    /// Row-wise `log Σ exp(x)` computed with a max shift.
    pub fn log_sum_exp(&mut self, a: Var) -> Result<Var> {
        self.log_sum_exp_masked(a, None)
    }

    /// Row-wise log-sum-exp over the entries whose mask bit is `true`.
    /// The mask has the same length as the input and is shared by no other
    /// node.
    pub fn log_sum_exp_masked(&mut self, a: Var, mask: Option<Vec<bool>>) -> Result<Var> {
        let shape = self.value(a).shape().to_vec();
        let (m, n) = row_view(&shape)?;
        if let Some(mask) = &mask {
            if mask.len() != m * n {
                return Err(Error::shape("log_sum_exp mask", &shape, &[mask.len()]));
            }
        }
        let src = self.value(a);
        let mut out = Vec::with_capacity(m);
        for i in 0..m {
            let row = src.row(i);
            let keep = |j: usize| mask.as_ref().is_none_or(|mk| mk[i * n + j]);
            let kept: Vec<f64> = (0..n).filter(|&j| keep(j)).map(|j| row[j]).collect();
            out.push(log_sum_exp(&kept));
        }
        let value = DenseArray::new(reduced_shape(&shape, m), out)?;
        self.push(value, Op::LogSumExp(a, mask), OpKind::LogSumExp, &[a])
    }

    /// Row-wise dot product of two equally shaped arrays.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("row_dot", a, b)?;
        let shape = self.value(a).shape().to_vec();
        let (m, _) = row_view(&shape)?;
        let out = (0..m)
            .map(|i| dot(self.value(a).row(i), self.value(b).row(i)))
            .collect();
        let value = DenseArray::new(reduced_shape(&shape, m), out)?;
        self.push(value, Op::RowDot(a, b), OpKind::RowDot, &[a, b])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = DenseArray::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a), OpKind::Sum, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let value = DenseArray::scalar(v.sum() / v.len() as f64);
        self.push(value, Op::Mean(a), OpKind::Mean, &[a])
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ma, na) = row_view(self.value(a).shape())?;
        let (mb, nb) = row_view(self.value(b).shape())?;
        if ma != mb {
            return Err(Error::shape("concat_cols", self.value(a).shape(), self.value(b).shape()));
        }
        let mut data = Vec::with_capacity(ma * (na + nb));
        for i in 0..ma {
            data.extend_from_slice(self.value(a).row(i));
            data.extend_from_slice(self.value(b).row(i));
        }
        let value = DenseArray::matrix(ma, na + nb, data)?;
        self.push(value, Op::ConcatCols(a, b), OpKind::ConcatCols, &[a, b])
    }

    pub fn select_cols(&mut self, a: Var, cols: &[usize]) -> Result<Var> {
        let (m, n) = row_view(self.value(a).shape())?;
        if let Some(&bad) = cols.iter().find(|&&c| c >= n) {
            return Err(Error::shape("select_cols", self.value(a).shape(), &[bad]));
        }
        let src = self.value(a);
        let mut data = Vec::with_capacity(m * cols.len());
        for i in 0..m {
            let row = src.row(i);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        let value = DenseArray::matrix(m, cols.len(), data)?;
        self.push(value, Op::SelectCols(a, cols.to_vec()), OpKind::SelectCols, &[a])
    }

    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let (m, n) = row_view(self.value(a).shape())?;
        if let Some(&bad) = rows.iter().find(|&&r| r >= m) {
            return Err(Error::shape("select_rows", self.value(a).shape(), &[bad]));
        }
        let src = self.value(a);
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            data.extend_from_slice(src.row(r));
        }
        let value = DenseArray::matrix(rows.len(), n, data)?;
        self.push(value, Op::SelectRows(a, rows.to_vec()), OpKind::SelectRows, &[a])
    }

    /// Accumulates `∂loss/∂node` into every node that depends on a
    /// parameter. A graph supports exactly one backward pass.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::DoubleBackward);
        }
        let loss_value = &self.nodes[loss.0].value;
        if !loss_value.is_scalar() {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        self.backward_done = true;
        let seed = DenseArray::filled(loss_value.shape(), 1.0);
        self.nodes[loss.0].grad = Some(seed);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.clone() else {
                continue;
            };
            let mut contributions = self.local_grads(i, &g)?;
            if self.fault == Some(self.nodes[i].kind) {
                for (_, c) in &mut contributions {
                    c.data_mut().iter_mut().for_each(|v| *v *= 1.5);
                }
            }
            for (parent, contribution) in contributions {
                let node = &mut self.nodes[parent.0];
                if !node.requires_grad {
                    continue;
                }
                match &mut node.grad {
                    Some(acc) => acc
                        .data_mut()
                        .iter_mut()
                        .zip(contribution.data())
                        .for_each(|(a, c)| *a += c),
                    None => node.grad = Some(contribution),
                }
            }
        }
        Ok(())
    }

    /// Gradients of every bound parameter. Parameters the loss does not
    /// reach get a zero gradient.
    pub fn param_grads(&self) -> Gradients {
        self.params
            .iter()
            .map(|(name, &v)| {
                let node = &self.nodes[v.0];
                let g = node
                    .grad
                    .clone()
                    .unwrap_or_else(|| DenseArray::zeros(node.value.shape()));
                (name.clone(), g)
            })
            .collect()
    }

    fn local_grads(&self, i: usize, g: &DenseArray) -> Result<Vec<(Var, DenseArray)>> {
        let node = &self.nodes[i];
        let out = &node.value;
        let val = |v: Var| &self.nodes[v.0].value;
        let with_shape = |like: &DenseArray, data: Vec<f64>| {
            DenseArray::new(like.shape().to_vec(), data).expect("gradient shape")
        };
        let grads = match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let (m, k) = row_view(val(*a).shape())?;
                let n = val(*b).cols();
                let ga = matmul_nt_raw(g.data(), val(*b).data(), m, n, k);
                let gb = matmul_tn_raw(val(*a).data(), g.data(), m, k, n);
                vec![(*a, with_shape(val(*a), ga)), (*b, with_shape(val(*b), gb))]
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = row_view(val(*a).shape())?;
                let n = val(*b).rows();
                let ga = matmul_raw(g.data(), val(*b).data(), m, n, k);
                let gb = matmul_tn_raw(g.data(), val(*a).data(), m, n, k);
                vec![(*a, with_shape(val(*a), ga)), (*b, with_shape(val(*b), gb))]
            }
            Op::MatMulTn(a, b) => {
                let (k, m) = row_view(val(*a).shape())?;
                let n = val(*b).cols();
                // out = aᵀb: ∂a = b·gᵀ (k×m), ∂b = a·g (k×n)
                let ga = matmul_nt_raw(val(*b).data(), g.data(), k, n, m);
                let gb = matmul_raw(val(*a).data(), g.data(), k, m, n);
                vec![(*a, with_shape(val(*a), ga)), (*b, with_shape(val(*b), gb))]
            }
            Op::Transpose(a) => {
                let gt = g.transpose();
                vec![(*a, with_shape(val(*a), gt.into_data()))]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|v| -v))],
            Op::Mul(a, b) => {
                let ga = g.data().iter().zip(val(*b).data()).map(|(x, y)| x * y).collect();
                let gb = g.data().iter().zip(val(*a).data()).map(|(x, y)| x * y).collect();
                vec![(*a, with_shape(g, ga)), (*b, with_shape(g, gb))]
            }
            Op::AddRow(a, row) => {
                let (m, n) = row_view(g.shape())?;
                let mut gb = vec![0.0; n];
                for r in 0..m {
                    for (acc, v) in gb.iter_mut().zip(g.row(r)) {
                        *acc += v;
                    }
                }
                vec![(*a, g.clone()), (*row, with_shape(val(*row), gb))]
            }
            Op::Scale(a, c) => vec![(*a, g.map(|v| v * c))],
            Op::AddScalar(a) => vec![(*a, g.clone())],
            Op::Relu(a) => {
                let ga = g
                    .data()
                    .iter()
                    .zip(val(*a).data())
                    .map(|(&gv, &x)| if x > 0.0 { gv } else { 0.0 })
                    .collect();
                vec![(*a, with_shape(g, ga))]
            }
            Op::Exp(a) => {
                let ga = g.data().iter().zip(out.data()).map(|(x, y)| x * y).collect();
                vec![(*a, with_shape(g, ga))]
            }
            Op::Log(a) => {
                let ga = g.data().iter().zip(val(*a).data()).map(|(x, y)| x / y).collect();
                vec![(*a, with_shape(g, ga))]
            }
            Op::Softmax(a) => {
                let (m, _) = row_view(g.shape())?;
                let mut ga = g.clone();
                for r in 0..m {
                    let y = out.row(r);
                    let s = dot(g.row(r), y);
                    for (gv, &yv) in ga.row_mut(r).iter_mut().zip(y) {
                        *gv = yv * (*gv - s);
                    }
                }
                vec![(*a, ga)]
            }
            Op::LogSoftmax(a) => {
                let (m, _) = row_view(g.shape())?;
                let mut ga = g.clone();
                for r in 0..m {
                    let s: f64 = g.row(r).iter().sum();
                    let y = out.row(r);
                    for (gv, &ly) in ga.row_mut(r).iter_mut().zip(y) {
                        *gv -= ly.exp() * s;
                    }
                }
                vec![(*a, ga)]
            }
            Op::L2Normalize(a, norms) => {
                let mut ga = g.clone();
                for (r, &norm) in norms.iter().enumerate() {
                    let y = out.row(r);
                    let s = dot(g.row(r), y);
                    for (gv, &yv) in ga.row_mut(r).iter_mut().zip(y) {
                        *gv = (*gv - yv * s) / norm;
                    }
                }
                vec![(*a, ga)]
            }
            Op::LogSumExp(a, mask) => {
                let x = val(*a);
                let (m, n) = row_view(x.shape())?;
                let mut ga = DenseArray::zeros(x.shape());
                for r in 0..m {
                    let lse = out.data()[r];
                    let gr = g.data()[r];
                    let xr = x.row(r).to_vec();
                    for (j, gv) in ga.row_mut(r).iter_mut().enumerate() {
                        if mask.as_ref().is_none_or(|mk| mk[r * n + j]) {
                            *gv = gr * (xr[j] - lse).exp();
                        }
                    }
                }
                vec![(*a, ga)]
            }
            Op::RowDot(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let (m, _) = row_view(va.shape())?;
                let mut ga = va.clone();
                let mut gb = vb.clone();
                for r in 0..m {
                    let gr = g.data()[r];
                    for (o, &bv) in ga.row_mut(r).iter_mut().zip(vb.row(r)) {
                        *o = gr * bv;
                    }
                    for (o, &av) in gb.row_mut(r).iter_mut().zip(va.row(r)) {
                        *o = gr * av;
                    }
                }
                vec![(*a, ga), (*b, gb)]
            }
            Op::Sum(a) => vec![(*a, DenseArray::filled(val(*a).shape(), g.data()[0]))],
            Op::Mean(a) => {
                let n = val(*a).len() as f64;
                vec![(*a, DenseArray::filled(val(*a).shape(), g.data()[0] / n))]
            }
            Op::ConcatCols(a, b) => {
                let (m, na) = row_view(val(*a).shape())?;
                let nb = val(*b).cols();
                let mut ga = Vec::with_capacity(m * na);
                let mut gb = Vec::with_capacity(m * nb);
                for r in 0..m {
                    let row = g.row(r);
                    ga.extend_from_slice(&row[..na]);
                    gb.extend_from_slice(&row[na..]);
                }
                vec![(*a, with_shape(val(*a), ga)), (*b, with_shape(val(*b), gb))]
            }
            Op::SelectCols(a, cols) => {
                let mut ga = DenseArray::zeros(val(*a).shape());
                for r in 0..g.rows() {
                    let src = g.row(r).to_vec();
                    let dst = ga.row_mut(r);
                    for (&c, v) in cols.iter().zip(src) {
                        dst[c] += v;
                    }
                }
                vec![(*a, ga)]
            }
            Op::SelectRows(a, rows) => {
                let mut ga = DenseArray::zeros(val(*a).shape());
                for (i, &r) in rows.iter().enumerate() {
                    let src = g.row(i).to_vec();
                    for (d, v) in ga.row_mut(r).iter_mut().zip(src) {
                        *d += v;
                    }
                }
                vec![(*a, ga)]
            }
        };
        Ok(grads)
    }
}

/// `log Σ exp(x)` with a max shift; `-∞` for an empty slice.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}
