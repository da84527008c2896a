//! Shared encoder, per-task heads and frozen teacher snapshots.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    /// No nonlinearity. Mostly useful in tests.
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }

    fn apply(self, m: &Matrix) -> Matrix {
        match self {
            Activation::Tanh => m.map(libm::tanh),
            Activation::Relu => m.map(|x| x.max(0.0)),
            Activation::Identity => m.clone(),
        }
    }

    fn apply_var(self, tape: &mut Tape, v: Var) -> Result<Var> {
        match self {
            Activation::Tanh => tape.tanh(v),
            Activation::Relu => tape.relu(v),
            Activation::Identity => Ok(v),
        }
    }
}

/// Affine layer `x W + b`, `W` is fan_in x fan_out.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Dense {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    fn glorot(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let limit = glorot_limit(fan_in, fan_out);
        let weight = Matrix::from_fn(fan_in, fan_out, |_, _| rng.uniform_in(-limit, limit));
        Self {
            weight,
            bias: Matrix::zeros(1, fan_out),
        }
    }

    fn forward(&self, x: &Matrix) -> Result<Matrix> {
        x.matmul(&self.weight)?.add_row(&self.bias)
    }
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    libm::sqrt(6.0 / (fan_in + fan_out) as f64)
}

/// Shared feature extractor. The activation follows every layer, including
/// the last, so latent codes are bounded under `tanh`.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    sizes: Vec<usize>,
    layers: Vec<Dense>,
    activation: Activation,
}

impl Encoder {
    pub fn new(sizes: &[usize], activation: Activation, rng: &mut Rng) -> Result<Self> {
        check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| Dense::glorot(w[0], w[1], rng))
            .collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            layers,
            activation,
        })
    }

    pub fn from_layers(sizes: &[usize], activation: Activation, layers: Vec<Dense>) -> Result<Self> {
        check_sizes(sizes)?;
        if layers.len() != sizes.len() - 1 {
            return Err(Error::InvalidParam {
                name: "layers",
                reason: format!("{} layers for {} sizes", layers.len(), sizes.len()),
            });
        }
        for (l, w) in layers.iter().zip(sizes.windows(2)) {
            if l.weight.shape() != (w[0], w[1]) || l.bias.shape() != (1, w[1]) {
                return Err(Error::Shape {
                    op: "encoder layer",
                    lhs: l.weight.shape(),
                    rhs: (w[0], w[1]),
                });
            }
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            layers,
            activation,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn latent_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape {
                op: "encode",
                lhs: x.shape(),
                rhs: (x.rows(), self.input_dim()),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = self.activation.apply(&layer.forward(&h)?);
        }
        Ok(h)
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::InvalidParam {
            name: "layer sizes",
            reason: format!("need at least two positive sizes, got {sizes:?}"),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub task: usize,
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Head {
    pub fn classes(&self) -> usize {
        self.weight.cols()
    }

    fn forward(&self, z: &Matrix) -> Result<Matrix> {
        z.matmul(&self.weight)?.add_row(&self.bias)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    encoder: Encoder,
    heads: Vec<Head>,
}

impl ModelState {
    pub fn new(sizes: &[usize], activation: Activation, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            encoder: Encoder::new(sizes, activation, rng)?,
            heads: Vec::new(),
        })
    }

    pub fn from_parts(encoder: Encoder, heads: Vec<Head>) -> Result<Self> {
        let latent = encoder.latent_dim();
        for (i, h) in heads.iter().enumerate() {
            if h.task != i {
                return Err(Error::InvalidParam {
                    name: "heads",
                    reason: format!("head {i} claims task {}", h.task),
                });
            }
            if h.weight.rows() != latent || h.bias.shape() != (1, h.classes()) {
                return Err(Error::Shape {
                    op: "head",
                    lhs: h.weight.shape(),
                    rhs: (latent, h.classes()),
                });
            }
            if h.classes() < 2 {
                return Err(Error::TooFewClasses {
                    min: 2,
                    got: h.classes(),
                });
            }
        }
        Ok(Self { encoder, heads })
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn encoder_mut(&mut self) -> &mut Encoder {
        &mut self.encoder
    }

    pub fn heads(&self) -> &[Head] {
        &self.heads
    }

    pub fn heads_mut(&mut self) -> &mut [Head] {
        &mut self.heads
    }

    pub fn task_count(&self) -> usize {
        self.heads.len()
    }

    /// Appends a Glorot-initialized head for the next task. The encoder and
    /// existing heads are untouched.
    pub fn add_head(&mut self, classes: usize, rng: &mut Rng) -> Result<()> {
        if classes < 2 {
            return Err(Error::TooFewClasses {
                min: 2,
                got: classes,
            });
        }
        let dense = Dense::glorot(self.encoder.latent_dim(), classes, rng);
        self.heads.push(Head {
            task: self.heads.len(),
            weight: dense.weight,
            bias: dense.bias,
        });
        Ok(())
    }

    fn head(&self, task: usize) -> Result<&Head> {
        self.heads.get(task).ok_or(Error::UnknownTask(task))
    }

    /// Latent representation without recording a graph.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        self.encoder.forward(x)
    }

    /// Logits of `task` from a latent batch.
    pub fn head_logits(&self, z: &Matrix, task: usize) -> Result<Matrix> {
        self.head(task)?.forward(z)
    }

    pub fn predict(&self, x: &Matrix, task: usize) -> Result<Matrix> {
        let head = self.head(task)?;
        head.forward(&self.encode(x)?)
    }

    pub fn snapshot(&self) -> TeacherSnapshot {
        TeacherSnapshot(self.clone())
    }

    /// All trainable matrices in a fixed order: encoder weight/bias per
    /// layer, then head weight/bias per task.
    pub fn params(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for l in &self.encoder.layers {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        for h in &self.heads {
            out.push(&h.weight);
            out.push(&h.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for l in &mut self.encoder.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        for h in &mut self.heads {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        out
    }

    /// Records every parameter as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        let layers = self
            .encoder
            .layers
            .iter()
            .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone())))
            .collect();
        let heads = self
            .heads
            .iter()
            .map(|h| (tape.leaf(h.weight.clone()), tape.leaf(h.bias.clone())))
            .collect();
        BoundModel {
            input_dim: self.encoder.input_dim(),
            activation: self.encoder.activation,
            layers,
            heads,
        }
    }
}

/// A model whose parameters live on a [`Tape`].
#[derive(Debug, Clone)]
pub struct BoundModel {
    input_dim: usize,
    activation: Activation,
    layers: Vec<(Var, Var)>,
    heads: Vec<(Var, Var)>,
}

impl BoundModel {
    /// Differentiable latent representation of `x`.
    pub fn encode(&self, tape: &mut Tape, x: &Matrix) -> Result<Var> {
        if x.cols() != self.input_dim {
            return Err(Error::Shape {
                op: "encode",
                lhs: x.shape(),
                rhs: (x.rows(), self.input_dim),
            });
        }
        let mut h = tape.leaf(x.clone());
        for &(w, b) in &self.layers {
            let lin = tape.matmul(h, w)?;
            let aff = tape.add_row(lin, b)?;
            h = self.activation.apply_var(tape, aff)?;
        }
        Ok(h)
    }

    pub fn head_logits(&self, tape: &mut Tape, z: Var, task: usize) -> Result<Var> {
        let &(w, b) = self.heads.get(task).ok_or(Error::UnknownTask(task))?;
        let lin = tape.matmul(z, w)?;
        tape.add_row(lin, b)
    }

    pub fn predict(&self, tape: &mut Tape, x: &Matrix, task: usize) -> Result<Var> {
        if task >= self.heads.len() {
            return Err(Error::UnknownTask(task));
        }
        let z = self.encode(tape, x)?;
        self.head_logits(tape, z, task)
    }

    /// Parameter handles in [`ModelState::params`] order.
    pub fn params(&self) -> Vec<Var> {
        self.layers
            .iter()
            .chain(&self.heads)
            .flat_map(|&(w, b)| [w, b])
            .collect()
    }

    pub fn grads(&self, tape: &Tape) -> Vec<Matrix> {
        self.params().into_iter().map(|v| tape.grad(v).clone()).collect()
    }
}

/// Frozen copy of a model at a task boundary. There is no mutable access.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherSnapshot(ModelState);

impl TeacherSnapshot {
    pub fn model(&self) -> &ModelState {
        &self.0
    }

    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        self.0.encode(x)
    }

    pub fn head_logits(&self, z: &Matrix, task: usize) -> Result<Matrix> {
        self.0.head_logits(z, task)
    }

    pub fn predict(&self, x: &Matrix, task: usize) -> Result<Matrix> {
        self.0.predict(x, task)
    }

    pub fn task_count(&self) -> usize {
        self.0.task_count()
    }
}
