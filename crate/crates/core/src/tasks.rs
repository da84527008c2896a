//! Task streams over a shared input space.
//!
//! Every generator draws one pool of inputs, labels it once per task and
//! partitions the pool into train/val/test by a seeded permutation. All tasks
//! of a stream use the same partition, so a sample is never in the training
//! split of one task and the test split of another.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{label_index, Matrix};
use crate::rng::Rng;

/// Fractions of the pool assigned to train and validation; test gets the rest.
pub const TRAIN_FRACTION: f64 = 0.70;
pub const VAL_FRACTION: f64 = 0.15;

/// ChaCha stream id used for data generation, distinct from training.
pub const DATA_STREAM: u64 = 1;

/// Radius splitting the uniform square `[-1, 1]^2` into equal areas:
/// `pi r^2 = 2`.
pub fn circle_radius() -> f64 {
    libm::sqrt(2.0 / core::f64::consts::PI)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub x: Matrix,
    /// N x 1 class indices.
    pub y: Matrix,
}

impl Split {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    fn subset(x: &Matrix, y: &Matrix, idx: &[usize]) -> Self {
        Self {
            x: x.select_rows(idx),
            y: y.select_rows(idx),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSplit {
    pub name: String,
    pub classes: usize,
    pub train: Split,
    pub val: Split,
    pub test: Split,
}

impl TaskSplit {
    pub fn splits(&self) -> [&Split; 3] {
        [&self.train, &self.val, &self.test]
    }

    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::TooFewClasses {
                min: 2,
                got: self.classes,
            });
        }
        for s in self.splits() {
            if s.y.rows() != s.x.rows() || s.y.cols() != 1 {
                return Err(Error::Shape {
                    op: "task split",
                    lhs: s.x.shape(),
                    rhs: s.y.shape(),
                });
            }
            for &l in s.y.as_slice() {
                label_index(l, self.classes)?;
            }
        }
        if self.train.is_empty() {
            return Err(Error::Empty { op: "train split" });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStream {
    tasks: Vec<TaskSplit>,
    input_dim: usize,
    stationary: bool,
}

impl TaskStream {
    pub fn new(tasks: Vec<TaskSplit>, stationary: bool) -> Result<Self> {
        let first = tasks.first().ok_or(Error::Empty { op: "task stream" })?;
        let input_dim = first.train.x.cols();
        for t in &tasks {
            t.validate()?;
            for s in t.splits() {
                if s.x.cols() != input_dim {
                    return Err(Error::Shape {
                        op: "task stream",
                        lhs: s.x.shape(),
                        rhs: (s.x.rows(), input_dim),
                    });
                }
            }
        }
        Ok(Self {
            tasks,
            input_dim,
            stationary,
        })
    }

    pub fn tasks(&self) -> &[TaskSplit] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn is_stationary(&self) -> bool {
        self.stationary
    }

    /// Standardizes every split with the per-feature mean and population
    /// standard deviation of task 0's training inputs. Constant features keep
    /// unit scale. Returns `(means, sds)`.
    pub fn zscore_from_first_train(&mut self) -> (Vec<f64>, Vec<f64>) {
        let x = &self.tasks[0].train.x;
        let n = x.rows() as f64;
        let d = x.cols();
        let mut means = alloc::vec![0.0; d];
        for i in 0..x.rows() {
            for (m, &v) in means.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut sds = alloc::vec![0.0; d];
        for i in 0..x.rows() {
            for ((s, &v), &m) in sds.iter_mut().zip(x.row(i)).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for s in sds.iter_mut() {
            *s = libm::sqrt(*s / n);
            if *s == 0.0 || !s.is_finite() {
                *s = 1.0;
            }
        }
        for task in &mut self.tasks {
            for split in [&mut task.train, &mut task.val, &mut task.test] {
                for i in 0..split.x.rows() {
                    for ((v, &m), &s) in split.x.row_mut(i).iter_mut().zip(&means).zip(&sds) {
                        *v = (*v - m) / s;
                    }
                }
            }
        }
        (means, sds)
    }
}

/// Row counts `(train, val, test)` for a pool of `n` samples.
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    let train = (n as f64 * TRAIN_FRACTION) as usize;
    let val = (n as f64 * VAL_FRACTION) as usize;
    (train, val, n - train - val)
}

/// A seeded permutation of `0..n` cut into train/val/test index sets.
pub fn partition(n: usize, rng: &mut Rng) -> [Vec<usize>; 3] {
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let (tr, va, _) = split_counts(n);
    let test = idx.split_off(tr + va);
    let val = idx.split_off(tr);
    [idx, val, test]
}

fn make_task(name: &str, classes: usize, x: &Matrix, y: &Matrix, parts: &[Vec<usize>; 3]) -> TaskSplit {
    TaskSplit {
        name: name.to_string(),
        classes,
        train: Split::subset(x, y, &parts[0]),
        val: Split::subset(x, y, &parts[1]),
        test: Split::subset(x, y, &parts[2]),
    }
}

/// 1 when the coordinate signs differ: `(1, 1) -> 0`, `(1, -1) -> 1`.
pub fn xor_label(x: f64, y: f64) -> usize {
    usize::from((x > 0.0) != (y > 0.0))
}

/// 0 inside [`circle_radius`], 1 on or outside it.
pub fn circle_label(x: f64, y: f64) -> usize {
    let r = circle_radius();
    usize::from(x * x + y * y >= r * r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ToyOrder {
    /// Concentric circles, then XOR.
    #[default]
    CirclesFirst,
    XorFirst,
}

/// Two binary tasks on the same 2-D points drawn uniformly from `[-1, 1]^2`.
/// Labels come from the clean point; inputs get isotropic Gaussian noise of
/// standard deviation `noise`.
pub fn gen_toy_xor_circles(n: usize, noise: f64, seed: u64, order: ToyOrder) -> Result<TaskStream> {
    if n < 8 {
        return Err(Error::InvalidParam {
            name: "n",
            reason: format!("toy stream needs n >= 8, got {n}"),
        });
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::InvalidParam {
            name: "noise",
            reason: format!("must be >= 0, got {noise}"),
        });
    }
    let mut rng = Rng::derived(seed, DATA_STREAM);
    let mut x = Matrix::zeros(n, 2);
    let mut y_xor = Matrix::zeros(n, 1);
    let mut y_circ = Matrix::zeros(n, 1);
    for i in 0..n {
        let a = rng.uniform_in(-1.0, 1.0);
        let b = rng.uniform_in(-1.0, 1.0);
        y_xor[(i, 0)] = xor_label(a, b) as f64;
        y_circ[(i, 0)] = circle_label(a, b) as f64;
        x[(i, 0)] = a + noise * rng.normal();
        x[(i, 1)] = b + noise * rng.normal();
    }
    let parts = partition(n, &mut rng);
    let circles = make_task("circles", 2, &x, &y_circ, &parts);
    let xor = make_task("xor", 2, &x, &y_xor, &parts);
    let tasks = match order {
        ToyOrder::CirclesFirst => alloc::vec![circles, xor],
        ToyOrder::XorFirst => alloc::vec![xor, circles],
    };
    TaskStream::new(tasks, true)
}

/// Parameters of the multi-attribute Gaussian-mixture stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttributeParams {
    /// Pool size.
    pub n: usize,
    /// Input dimension.
    pub dim: usize,
    pub tasks: usize,
    /// Mixture components.
    pub components: usize,
    /// Standard deviation of component centers around the origin.
    pub spread: f64,
    pub seed: u64,
}

impl Default for AttributeParams {
    fn default() -> Self {
        Self {
            n: 2000,
            dim: 10,
            tasks: 5,
            components: 4,
            spread: 2.0,
            seed: 0,
        }
    }
}

/// Growth of the per-task input scale relative to `shift_scale`.
pub const SHIFT_COV_GROWTH: f64 = 0.25;

/// Inputs from an isotropic Gaussian mixture. Task `t` labels a sample by the
/// side of a random hyperplane restricted to `max(2, ceil(dim / tasks))`
/// randomly chosen coordinates; the offset is the median projection so each
/// task is balanced.
pub fn gen_attribute_stream(params: &AttributeParams) -> Result<TaskStream> {
    gen_shift_stream(params, 0.0)
}

/// Non-stationary variant of [`gen_attribute_stream`]: task `t` sees
/// `x = c + (u - c) * (1 + SHIFT_COV_GROWTH * t * s) + t * s * e`, where `u`
/// is the stationary draw, `c` its mixture center and `e` is one on the first
/// `ceil(dim / 2)` coordinates. Labels are those of the stationary draw.
/// `s = 0` reproduces the stationary stream exactly.
pub fn gen_shift_stream(params: &AttributeParams, shift_scale: f64) -> Result<TaskStream> {
    let AttributeParams {
        n,
        dim,
        tasks,
        components,
        spread,
        seed,
    } = *params;
    if tasks < 2 {
        return Err(Error::InvalidParam {
            name: "tasks",
            reason: format!("need at least 2 tasks, got {tasks}"),
        });
    }
    if dim < tasks {
        return Err(Error::InvalidParam {
            name: "dim",
            reason: format!("dim {dim} < tasks {tasks}"),
        });
    }
    if n < 8 || components == 0 {
        return Err(Error::InvalidParam {
            name: "n",
            reason: format!("need n >= 8 and components >= 1, got {n}, {components}"),
        });
    }
    if !(shift_scale.is_finite() && shift_scale >= 0.0) {
        return Err(Error::InvalidParam {
            name: "shift_scale",
            reason: format!("must be >= 0, got {shift_scale}"),
        });
    }
    let mut rng = Rng::derived(seed, DATA_STREAM);
    let centers = Matrix::from_fn(components, dim, |_, _| spread * rng.normal());
    let sub = 2.max(dim.div_ceil(tasks)).min(dim);
    let mut hyperplanes = Vec::with_capacity(tasks);
    for _ in 0..tasks {
        let mut coords: Vec<usize> = (0..dim).collect();
        rng.shuffle(&mut coords);
        coords.truncate(sub);
        let normal: Vec<f64> = coords.iter().map(|_| rng.normal()).collect();
        hyperplanes.push((coords, normal));
    }
    let mut comp = Vec::with_capacity(n);
    let mut u = Matrix::zeros(n, dim);
    for i in 0..n {
        let k = rng.below(components);
        comp.push(k);
        for j in 0..dim {
            u[(i, j)] = centers[(k, j)] + rng.normal();
        }
    }
    let parts = partition(n, &mut rng);

    let shifted_coords = dim.div_ceil(2);
    let mut out = Vec::with_capacity(tasks);
    for (t, (coords, normal)) in hyperplanes.iter().enumerate() {
        let proj: Vec<f64> = (0..n)
            .map(|i| coords.iter().zip(normal).map(|(&c, &w)| w * u[(i, c)]).sum())
            .collect();
        let mut sorted = proj.clone();
        sorted.sort_by(f64::total_cmp);
        let offset = 0.5 * (sorted[(n - 1) / 2] + sorted[n / 2]);
        let y = Matrix::from_fn(n, 1, |i, _| if proj[i] > offset { 1.0 } else { 0.0 });
        let x = if shift_scale == 0.0 {
            u.clone()
        } else {
            let shift = t as f64 * shift_scale;
            let factor = 1.0 + SHIFT_COV_GROWTH * shift;
            Matrix::from_fn(n, dim, |i, j| {
                let c = centers[(comp[i], j)];
                let mean_shift = if j < shifted_coords { shift } else { 0.0 };
                c + (u[(i, j)] - c) * factor + mean_shift
            })
        };
        out.push(make_task(&format!("attr{t}"), 2, &x, &y, &parts));
    }
    TaskStream::new(out, shift_scale == 0.0)
}
