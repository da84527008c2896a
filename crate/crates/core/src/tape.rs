//! Reverse-mode differentiation over matrices.
//!
//! A [`Tape`] records every operation as it is evaluated. Nodes are appended
//! in evaluation order, so parents always have smaller indices than their
//! children and a single reverse sweep visits every node after all of its
//! consumers. A tape is built per training step and dropped afterwards.
//!
//! ```
//! use lwp_core::{Matrix, Tape};
//!
//! let mut tape = Tape::new();
//! let w = tape.leaf(Matrix::from_rows(&[[1.0, 2.0]]));
//! let loss = tape.frobenius_sq(w).unwrap();
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(w), &Matrix::from_rows(&[[2.0, 4.0]]));
//! ```

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{dot, softmax_rows, Matrix};

/// Clamp applied to row norms in the cosine-similarity operation.
pub const COSINE_NORM_FLOOR: f64 = 1e-12;

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
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    SubConst(Var),
    MulConst(Var, Matrix),
    Scale(Var, f64),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    PairwiseSqDist { z: Var, clamped: Vec<bool> },
    PairwiseCosine { z: Var, unit: Matrix, norms: Vec<f64> },
    FrobeniusSq(Var),
    SoftmaxCrossEntropy { logits: Var, probs: Matrix, targets: Matrix },
}

impl Op {
    fn parents(&self) -> [Option<Var>; 2] {
        match *self {
            Op::Leaf => [None, None],
            Op::MatMul(a, b) | Op::AddRow(a, b) | Op::Add(a, b) | Op::Sub(a, b) => {
                [Some(a), Some(b)]
            }
            Op::SubConst(a)
            | Op::MulConst(a, _)
            | Op::Scale(a, _)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Exp(a)
            | Op::FrobeniusSq(a) => [Some(a), None],
            Op::PairwiseSqDist { z, .. } | Op::PairwiseCosine { z, .. } => [Some(z), None],
            Op::SoftmaxCrossEntropy { logits, .. } => [Some(logits), None],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    grad: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
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

    /// Records an input. Parameters and constants are both leaves; only the
    /// caller decides which leaf gradients to read back.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.nodes.push(Node {
            value,
            grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].grad
    }

    fn push(&mut self, value: Matrix, op: Op, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.nodes.push(Node { value, grad, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push(value, Op::MatMul(a, b), "matmul")
    }

    /// `a + bias`, with the 1 x C bias broadcast over rows.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let value = self.value(a).add_row(self.value(bias))?;
        self.push(value, Op::AddRow(a, bias), "add_row")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        self.push(value, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        self.push(value, Op::Sub(a, b), "sub")
    }

    /// `a - c` for a constant matrix `c`.
    pub fn sub_const(&mut self, a: Var, c: &Matrix) -> Result<Var> {
        let value = self.value(a).zip_map(c, "sub_const", |x, y| x - y)?;
        self.push(value, Op::SubConst(a), "sub_const")
    }

    /// Elementwise product with a constant matrix.
    pub fn mul_const(&mut self, a: Var, c: &Matrix) -> Result<Var> {
        let value = self.value(a).zip_map(c, "mul_const", |x, y| x * y)?;
        self.push(value, Op::MulConst(a, c.clone()), "mul_const")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x * s);
        self.push(value, Op::Scale(a, s), "scale")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(libm::tanh);
        self.push(value, Op::Tanh(a), "tanh")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push(value, Op::Relu(a), "relu")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(libm::exp);
        self.push(value, Op::Exp(a), "exp")
    }

    /// N x N matrix of squared Euclidean distances between the rows of `z`.
    pub fn pairwise_sq_dist(&mut self, z: Var) -> Result<Var> {
        let (value, clamped) = pairwise_sq_dist_value(self.value(z))?;
        self.push(value, Op::PairwiseSqDist { z, clamped }, "pairwise_sq_dist")
    }

    /// N x N matrix of cosine similarities between the rows of `z`. Row norms
    /// are floored at [`COSINE_NORM_FLOOR`].
    pub fn pairwise_cosine(&mut self, z: Var) -> Result<Var> {
        let zv = self.value(z);
        if zv.rows() == 0 {
            return Err(Error::Empty {
                op: "pairwise_cosine",
            });
        }
        let norms: Vec<f64> = (0..zv.rows())
            .map(|i| libm::sqrt(dot(zv.row(i), zv.row(i))).max(COSINE_NORM_FLOOR))
            .collect();
        let unit = Matrix::from_fn(zv.rows(), zv.cols(), |i, j| zv[(i, j)] / norms[i]);
        let value = unit.matmul_t(&unit)?;
        self.push(value, Op::PairwiseCosine { z, unit, norms }, "pairwise_cosine")
    }

    /// Sum of squared entries as a 1 x 1 node.
    pub fn frobenius_sq(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).as_slice().iter().map(|x| x * x).sum();
        self.push(Matrix::scalar(s), Op::FrobeniusSq(a), "frobenius_sq")
    }

    /// Mean over rows of `-sum_c t_c log softmax(logits)_c`. Target rows must
    /// be probability vectors.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &Matrix) -> Result<Var> {
        let lv = self.value(logits);
        lv.expect_same_shape(targets, "softmax_cross_entropy")?;
        if lv.cols() < 2 {
            return Err(Error::TooFewClasses {
                min: 2,
                got: lv.cols(),
            });
        }
        if lv.rows() == 0 {
            return Err(Error::Empty {
                op: "softmax_cross_entropy",
            });
        }
        for i in 0..targets.rows() {
            let sum: f64 = targets.row(i).iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::TargetNotDistribution { row: i, sum });
            }
        }
        let mut total = 0.0;
        for i in 0..lv.rows() {
            let row = lv.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + libm::log(row.iter().map(|&v| libm::exp(v - max)).sum::<f64>());
            for (&l, &t) in row.iter().zip(targets.row(i)) {
                if t != 0.0 {
                    total -= t * (l - lse);
                }
            }
        }
        let value = Matrix::scalar(total / lv.rows() as f64);
        let probs = softmax_rows(lv);
        self.push(
            value,
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                targets: targets.clone(),
            },
            "softmax_cross_entropy",
        )
    }

    /// Populates gradients of every node reachable from the scalar `root`.
    /// May only run once per tape.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        let shape = self.value(root).shape();
        if shape != (1, 1) {
            return Err(Error::NonScalarRoot(shape));
        }
        for (idx, node) in self.nodes.iter().enumerate().take(root.0 + 1) {
            for p in node.op.parents().into_iter().flatten() {
                if p.0 >= idx {
                    return Err(Error::Cycle {
                        node: idx,
                        parent: p.0,
                    });
                }
            }
        }
        self.backward_done = true;
        self.nodes[root.0].grad = Matrix::scalar(1.0);
        for idx in (0..=root.0).rev() {
            let (head, tail) = self.nodes.split_at_mut(idx);
            let node = &tail[0];
            if matches!(node.op, Op::Leaf) || node.grad.as_slice().iter().all(|&g| g == 0.0) {
                continue;
            }
            propagate(head, node)?;
        }
        Ok(())
    }
}

fn pairwise_sq_dist_value(z: &Matrix) -> Result<(Matrix, Vec<bool>)> {
    let n = z.rows();
    if n == 0 {
        return Err(Error::Empty {
            op: "pairwise_sq_dist",
        });
    }
    let gram = z.matmul_t(z)?;
    let mut out = Matrix::zeros(n, n);
    let mut clamped = alloc::vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)];
            if d < 0.0 {
                clamped[i * n + j] = true;
            } else {
                out[(i, j)] = d;
            }
        }
    }
    Ok((out, clamped))
}

/// Squared pairwise distances of a plain matrix, same arithmetic as the tape op.
pub fn pairwise_sq_dist_matrix(z: &Matrix) -> Result<Matrix> {
    pairwise_sq_dist_value(z).map(|(m, _)| m)
}

fn propagate(head: &mut [Node], node: &Node) -> Result<()> {
    let g = &node.grad;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let da = g.matmul_t(&head[b.0].value)?;
            let db = head[a.0].value.t_matmul(g)?;
            head[a.0].grad.add_assign(&da);
            head[b.0].grad.add_assign(&db);
        }
        Op::AddRow(a, bias) => {
            head[a.0].grad.add_assign(g);
            let db = g.sum_rows();
            head[bias.0].grad.add_assign(&db);
        }
        Op::Add(a, b) => {
            head[a.0].grad.add_assign(g);
            head[b.0].grad.add_assign(g);
        }
        Op::Sub(a, b) => {
            head[a.0].grad.add_assign(g);
            head[b.0].grad.add_scaled_assign(g, -1.0);
        }
        Op::SubConst(a) => head[a.0].grad.add_assign(g),
        Op::MulConst(a, c) => {
            let da = g.zip_map(c, "mul_const", |x, y| x * y)?;
            head[a.0].grad.add_assign(&da);
        }
        Op::Scale(a, s) => head[a.0].grad.add_scaled_assign(g, *s),
        Op::Tanh(a) => {
            let da = g.zip_map(&node.value, "tanh", |gy, y| gy * (1.0 - y * y))?;
            head[a.0].grad.add_assign(&da);
        }
        Op::Relu(a) => {
            let da = g.zip_map(&head[a.0].value, "relu", |gy, x| if x > 0.0 { gy } else { 0.0 })?;
            head[a.0].grad.add_assign(&da);
        }
        Op::Exp(a) => {
            let da = g.zip_map(&node.value, "exp", |gy, y| gy * y)?;
            head[a.0].grad.add_assign(&da);
        }
        Op::PairwiseSqDist { z, clamped } => {
            let n = g.rows();
            // dL/dz_k = 2 sum_j (g_kj + g_jk)(z_k - z_j)
            let sym = Matrix::from_fn(n, n, |i, j| {
                if i == j || clamped[i * n + j] {
                    0.0
                } else {
                    g[(i, j)] + g[(j, i)]
                }
            });
            let zv = &head[z.0].value;
            let sz = sym.matmul(zv)?;
            let dz = Matrix::from_fn(zv.rows(), zv.cols(), |i, k| {
                let rowsum: f64 = sym.row(i).iter().sum();
                2.0 * (rowsum * zv[(i, k)] - sz[(i, k)])
            });
            head[z.0].grad.add_assign(&dz);
        }
        Op::PairwiseCosine { z, unit, norms } => {
            let n = g.rows();
            let sym = Matrix::from_fn(n, n, |i, j| g[(i, j)] + g[(j, i)]);
            let du = sym.matmul(unit)?;
            let zv = &head[z.0].value;
            let mut dz = Matrix::zeros(zv.rows(), zv.cols());
            for i in 0..n {
                let raw_norm = libm::sqrt(dot(zv.row(i), zv.row(i)));
                let proj = if raw_norm > COSINE_NORM_FLOOR {
                    dot(unit.row(i), du.row(i))
                } else {
                    0.0
                };
                for k in 0..zv.cols() {
                    dz[(i, k)] = (du[(i, k)] - unit[(i, k)] * proj) / norms[i];
                }
            }
            head[z.0].grad.add_assign(&dz);
        }
        Op::FrobeniusSq(a) => {
            let s = g.item();
            let da = head[a.0].value.map(|x| 2.0 * s * x);
            head[a.0].grad.add_assign(&da);
        }
        Op::SoftmaxCrossEntropy {
            logits,
            probs,
            targets,
        } => {
            let scale = g.item() / probs.rows() as f64;
            let dl = probs.zip_map(targets, "softmax_cross_entropy", |p, t| scale * (p - t))?;
            head[logits.0].grad.add_assign(&dl);
        }
    }
    Ok(())
}
