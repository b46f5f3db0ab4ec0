//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends a node holding its output value and the inputs it
//! read. Node indices are therefore a topological order, and [`Tape::backward`]
//! walks them in reverse, accumulating gradients into each reachable node's
//! gradient slot.
//!
//! ```
//! use memlab::tape::Tape;
//! use memlab::tensor::Tensor;
//!
//! let mut tape = Tape::new();
//! let theta = tape.leaf(Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
//! let sq = tape.mul(theta, theta).unwrap();
//! let root = tape.sum(sq);
//! tape.backward(root).unwrap();
//! assert_eq!(tape.grad(theta).unwrap(), &[2.0, -4.0, 1.0]);
//! ```

use crate::error::{Error, Result};
use crate::kernels::{self, ConvGeometry};
use crate::tensor::{numel, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRowBias(Var, Var),
    AddChannelBias(Var, Var),
    Relu(Var),
    Tanh(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Conv2d(Var, Var, ConvGeometry),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    NllMean(Var, Vec<usize>),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRowBias(a, b)
            | Op::AddChannelBias(a, b)
            | Op::Conv2d(a, b, _) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Tanh(a)
            | Op::Softmax(a)
            | Op::LogSoftmax(a)
            | Op::Reshape(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::NllMean(a, _) => vec![*a],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Recorded computation for one forward pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn last_dim(t: &Tensor) -> usize {
    t.shape().last().copied().unwrap_or(1)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        let mut value = value;
        value.clear_grad();
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::Dimension(format!("{what}: shapes {sa:?} and {sb:?} differ")));
        }
        Ok(())
    }

    fn elementwise(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(a, b, "elementwise op")?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(out, op))
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let ta = self.value(a);
        let out = Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|x| f(*x)).collect())?;
        Ok(self.push(out, op))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension(format!(
                "matmul of {sa:?} and {sb:?}"
            )));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = Tensor::new(vec![m, n], kernels::matmul(ta.data(), tb.data(), m, k, n))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.unary(a, Op::Scale(a, factor), |x| x * factor)
    }

    /// `x[N×M] + b[M]` broadcast over rows.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tx.rank() != 2 || tb.rank() != 1 || tx.shape()[1] != tb.len() {
            return Err(Error::Dimension(format!(
                "row bias {:?} for input {:?}",
                tb.shape(),
                tx.shape()
            )));
        }
        let cols = tb.len();
        let mut data = tx.data().to_vec();
        for row in data.chunks_exact_mut(cols) {
            row.iter_mut().zip(tb.data()).for_each(|(o, b)| *o += b);
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(out, Op::AddRowBias(x, bias)))
    }

    /// `x[N×F×H×W] + b[F]` broadcast over batch and spatial positions.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tx.rank() != 4 || tb.rank() != 1 || tx.shape()[1] != tb.len() {
            return Err(Error::Dimension(format!(
                "channel bias {:?} for input {:?}",
                tb.shape(),
                tx.shape()
            )));
        }
        let plane = tx.shape()[2] * tx.shape()[3];
        let filters = tb.len();
        let mut data = tx.data().to_vec();
        for (i, chunk) in data.chunks_exact_mut(plane).enumerate() {
            let b = tb.data()[i % filters];
            chunk.iter_mut().for_each(|v| *v += b);
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(out, Op::AddChannelBias(x, bias)))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    /// Softmax over the trailing axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let data = kernels::softmax_rows(ta.data(), last_dim(ta));
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Softmax(a)))
    }

    /// Log-softmax over the trailing axis.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let data = kernels::log_softmax_rows(ta.data(), last_dim(ta));
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(out, Op::LogSoftmax(a)))
    }

    /// 2-D cross-correlation of `input[N×C×H×W]` with `kernel[F×C×kh×kw]`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let (ti, tk) = (self.value(input), self.value(kernel));
        let (si, sk) = (ti.shape(), tk.shape());
        if si.len() != 4 || sk.len() != 4 || si[1] != sk[1] {
            return Err(Error::Dimension(format!("conv2d of input {si:?} with kernel {sk:?}")));
        }
        if stride == 0 {
            return Err(Error::Dimension("conv2d stride must be positive".into()));
        }
        if sk[2] > si[2] + 2 * padding || sk[3] > si[3] + 2 * padding {
            return Err(Error::Dimension(format!(
                "kernel {sk:?} larger than input {si:?} padded by {padding}"
            )));
        }
        let geom = ConvGeometry {
            batch: si[0],
            channels: si[1],
            height: si[2],
            width: si[3],
            filters: sk[0],
            kernel_h: sk[2],
            kernel_w: sk[3],
            stride,
            padding,
        };
        let data = kernels::conv2d_forward(ti.data(), tk.data(), &geom);
        let out = Tensor::new(vec![geom.batch, geom.filters, geom.out_h(), geom.out_w()], data)?;
        Ok(self.push(out, Op::Conv2d(input, kernel, geom)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = Tensor::new(shape.to_vec(), self.value(a).data().to_vec())?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// Collapses all but the leading axis.
    pub fn flatten(&mut self, a: Var) -> Result<Var> {
        let shape = self.value(a).shape();
        let rows = shape.first().copied().unwrap_or(1);
        let cols = numel(shape.get(1..).unwrap_or(&[]));
        self.reshape(a, &[rows, cols])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(m), Op::Mean(a))
    }

    /// `-mean_i logp[i, labels[i]]` for `logp[N×C]`.
    pub fn nll_mean(&mut self, logp: Var, labels: &[usize]) -> Result<Var> {
        let t = self.value(logp);
        if t.rank() != 2 || t.shape()[0] != labels.len() {
            return Err(Error::Dimension(format!(
                "nll over {:?} with {} labels",
                t.shape(),
                labels.len()
            )));
        }
        let classes = t.shape()[1];
        if let Some(bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Data(format!("label {bad} outside [0, {classes})")));
        }
        let total: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| t.data()[i * classes + y])
            .sum();
        let value = -total / labels.len() as f64;
        Ok(self.push(Tensor::scalar(value), Op::NllMean(logp, labels.to_vec())))
    }

    /// Populates gradient slots of every node reachable from `root`.
    ///
    /// Slots of unreachable nodes are left untouched.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if !self.value(root).is_scalar() {
            return Err(Error::Contract(format!(
                "backward from non-scalar root of shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut reachable = vec![false; root.0 + 1];
        reachable[root.0] = true;
        for i in (0..=root.0).rev() {
            if reachable[i] {
                for v in self.nodes[i].op.inputs() {
                    reachable[v.0] = true;
                }
            }
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            if !reachable[i] {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            for (input, contribution) in self.local_grads(i, &g) {
                match &mut grads[input.0] {
                    Some(acc) => acc.iter_mut().zip(&contribution).for_each(|(a, c)| *a += c),
                    slot @ None => *slot = Some(contribution),
                }
            }
            grads[i] = Some(g);
        }

        for (i, g) in grads.into_iter().enumerate() {
            if reachable[i] {
                let len = self.nodes[i].value.len();
                self.nodes[i].value.set_grad(g.unwrap_or_else(|| vec![0.0; len]))?;
            }
        }
        Ok(())
    }

    /// Gradient contributions from node `i` to each of its inputs.
    fn local_grads(&self, i: usize, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let node = &self.nodes[i];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                vec![
                    (*a, kernels::matmul_b_transposed(g, tb.data(), m, k, n)),
                    (*b, kernels::matmul_a_transposed(ta.data(), g, m, k, n)),
                ]
            }
            Op::Add(a, b) => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::Sub(a, b) => vec![(*a, g.to_vec()), (*b, g.iter().map(|x| -x).collect())],
            Op::Mul(a, b) => {
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                vec![
                    (*a, g.iter().zip(db).map(|(x, y)| x * y).collect()),
                    (*b, g.iter().zip(da).map(|(x, y)| x * y).collect()),
                ]
            }
            Op::Scale(a, f) => vec![(*a, g.iter().map(|x| x * f).collect())],
            Op::AddRowBias(x, b) => {
                let cols = self.value(*b).len();
                let mut db = vec![0.0; cols];
                for row in g.chunks_exact(cols) {
                    db.iter_mut().zip(row).for_each(|(d, r)| *d += r);
                }
                vec![(*x, g.to_vec()), (*b, db)]
            }
            Op::AddChannelBias(x, b) => {
                let shape = self.value(*x).shape();
                let plane = shape[2] * shape[3];
                let filters = shape[1];
                let mut db = vec![0.0; filters];
                for (j, chunk) in g.chunks_exact(plane).enumerate() {
                    db[j % filters] += chunk.iter().sum::<f64>();
                }
                vec![(*x, g.to_vec()), (*b, db)]
            }
            Op::Relu(a) => {
                let da = self.value(*a).data();
                vec![(*a, g.iter().zip(da).map(|(x, v)| if *v > 0.0 { *x } else { 0.0 }).collect())]
            }
            Op::Tanh(a) => vec![(*a, g.iter().zip(out).map(|(x, y)| x * (1.0 - y * y)).collect())],
            Op::Softmax(a) => {
                let cols = last_dim(&node.value);
                let mut da = vec![0.0; g.len()];
                for ((grow, yrow), drow) in g
                    .chunks_exact(cols)
                    .zip(out.chunks_exact(cols))
                    .zip(da.chunks_exact_mut(cols))
                {
                    let dot: f64 = grow.iter().zip(yrow).map(|(x, y)| x * y).sum();
                    for ((d, x), y) in drow.iter_mut().zip(grow).zip(yrow) {
                        *d = y * (x - dot);
                    }
                }
                vec![(*a, da)]
            }
            Op::LogSoftmax(a) => {
                let cols = last_dim(&node.value);
                let mut da = vec![0.0; g.len()];
                for ((grow, lrow), drow) in g
                    .chunks_exact(cols)
                    .zip(out.chunks_exact(cols))
                    .zip(da.chunks_exact_mut(cols))
                {
                    let total: f64 = grow.iter().sum();
                    for ((d, x), l) in drow.iter_mut().zip(grow).zip(lrow) {
                        *d = x - l.exp() * total;
                    }
                }
                vec![(*a, da)]
            }
            Op::Conv2d(input, kernel, geom) => {
                let (di, dk) = kernels::conv2d_backward(
                    self.value(*input).data(),
                    self.value(*kernel).data(),
                    g,
                    geom,
                );
                vec![(*input, di), (*kernel, dk)]
            }
            Op::Reshape(a) => vec![(*a, g.to_vec())],
            Op::Sum(a) => vec![(*a, vec![g[0]; self.value(*a).len()])],
            Op::Mean(a) => {
                let n = self.value(*a).len();
                vec![(*a, vec![g[0] / n as f64; n])]
            }
            Op::NllMean(a, labels) => {
                let classes = self.value(*a).shape()[1];
                let mut da = vec![0.0; self.value(*a).len()];
                let w = -g[0] / labels.len() as f64;
                for (i, &y) in labels.iter().enumerate() {
                    da[i * classes + y] = w;
                }
                vec![(*a, da)]
            }
        }
    }
}
