//! Sequential training over a task stream.
//!
//! For every task after the first the current model is frozen into a
//! [`TeacherSnapshot`], a new head is appended, and the student is trained on
//! the new task's data only. Each mini-batch step evaluates
//!
//! 1. the student latent batch `z` and current-task logits,
//! 2. the teacher latent batch `z'` and teacher logits for every old head
//!    (plain forward passes, never recorded on the tape),
//! 3. `L_cur`, `L_old` and `L_dwdp`, weighted per [`Mode`],
//!
//! and applies one Adam step. Training stops early when the validation
//! composite loss has not improved for `patience` epochs; the parameters of
//! the best epoch are restored.
//!
//! Runs are reproducible: the model, head initializations and per-epoch
//! Fisher-Yates shuffles all draw from one ChaCha8 stream derived from the
//! run seed.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::losses::{
    current_task_loss, dwdp_loss, dwdp_mask, labels_one_hot, lwp_total, old_task_loss, DistanceVariant,
    LossWeights, Mask, PseudolabelMode,
};
use crate::matrix::Matrix;
use crate::metrics::{accuracy, ece, gram_deviation, AccuracyMatrix};
use crate::model::{Activation, ModelState, TeacherSnapshot};
use crate::optim::{AdamConfig, OptimizerState};
use crate::rng::Rng;
use crate::tape::Tape;
use crate::tasks::{Split, TaskSplit, TaskStream};

/// ChaCha stream id used for parameter init and shuffling.
pub const TRAIN_STREAM: u64 = 2;

/// Rows of task 0's test split used to trace latent Gram deviation.
pub const PROBE_ROWS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// Cross-entropy, distillation and distance preservation.
    Lwp,
    /// Cross-entropy and distillation.
    Lwf,
    /// Cross-entropy only, sequentially fine-tuned.
    NaiveFt,
    /// A fresh model per task.
    Stl,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Lwp, Mode::Lwf, Mode::NaiveFt, Mode::Stl];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Lwp => "lwp",
            Mode::Lwf => "lwf",
            Mode::NaiveFt => "naive_ft",
            Mode::Stl => "stl",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Mode::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Loss weights actually applied under this mode.
    pub fn effective_weights(self, w: &LossWeights) -> LossWeights {
        match self {
            Mode::Lwp => *w,
            Mode::Lwf => LossWeights { lambda_d: 0.0, ..*w },
            Mode::NaiveFt | Mode::Stl => LossWeights {
                lambda_o: 0.0,
                lambda_d: 0.0,
                ..*w
            },
        }
    }

    pub fn needs_teacher(self) -> bool {
        matches!(self, Mode::Lwp | Mode::Lwf)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub latent: usize,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            latent: 16,
            activation: Activation::Tanh,
        }
    }
}

impl ModelConfig {
    pub fn sizes(&self, input_dim: usize) -> Vec<usize> {
        let mut s = vec![input_dim];
        s.extend_from_slice(&self.hidden);
        s.push(self.latent);
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    pub variant: DistanceVariant,
    /// Restrict preservation to same-label pairs.
    pub use_mask: bool,
    pub temperature: f64,
    pub pseudolabels: PseudolabelMode,
    pub patience: usize,
    pub seed: u64,
    pub mode: Mode,
    pub model: ModelConfig,
    pub ece_bins: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 256,
            adam: AdamConfig::default(),
            weights: LossWeights::default(),
            variant: DistanceVariant::SqEuclidean,
            use_mask: true,
            temperature: 1.0,
            pseudolabels: PseudolabelMode::Soft,
            patience: 5,
            seed: 0,
            mode: Mode::Lwp,
            model: ModelConfig::default(),
            ece_bins: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: alloc::string::String| Err(Error::InvalidParam { name, reason });
        if self.epochs == 0 {
            return bad("epochs", "must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be >= 1".into());
        }
        let w = self.mode.effective_weights(&self.weights);
        if w.lambda_d > 0.0 && self.batch_size < 2 {
            return bad("batch_size", format!("{} < 2 with preservation active", self.batch_size));
        }
        if !(self.adam.lr.is_finite() && self.adam.lr > 0.0) {
            return bad("lr", format!("must be > 0, got {}", self.adam.lr));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return bad("temperature", format!("must be > 0, got {}", self.temperature));
        }
        if self.patience == 0 {
            return bad("patience", "must be >= 1".into());
        }
        if self.ece_bins < 2 {
            return bad("ece_bins", "must be >= 2".into());
        }
        if self.model.latent == 0 || self.model.hidden.contains(&0) {
            return bad("model", "layer sizes must be positive".into());
        }
        LossWeights::new(self.weights.lambda_c, self.weights.lambda_o, self.weights.lambda_d)?;
        Ok(())
    }
}

/// Source of wall-clock time in seconds. The core crate has no clock of its
/// own; [`NoClock`] reports zero.
pub trait Clock {
    fn now_secs(&self) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_secs(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub task: usize,
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    /// Epoch (0-based) whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub steps: u64,
    pub wall_clock_secs: f64,
}

/// True iff the best (first minimum) validation loss is at least `patience`
/// epochs old.
pub fn early_stop(val_losses: &[f64], patience: usize) -> bool {
    match best_index(val_losses) {
        Some(best) => val_losses.len() - 1 - best >= patience,
        None => false,
    }
}

fn best_index(series: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in series.iter().enumerate() {
        if best.is_none_or(|b| v < series[b]) {
            best = Some(i);
        }
    }
    best
}

/// Everything a step needs from the teacher for one batch.
struct TeacherBatch {
    latent: Matrix,
    old_logits: Vec<Matrix>,
}

fn teacher_batch(teacher: &TeacherSnapshot, x: &Matrix, old_tasks: usize, need_logits: bool) -> Result<TeacherBatch> {
    let latent = teacher.encode(x)?;
    let old_logits = if need_logits {
        (0..old_tasks)
            .map(|o| teacher.head_logits(&latent, o))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    Ok(TeacherBatch { latent, old_logits })
}

/// Builds the composite loss of one batch on `tape`; returns the model
/// binding and the loss node.
#[allow(clippy::too_many_arguments)]
fn batch_loss(
    tape: &mut Tape,
    model: &ModelState,
    teacher: Option<&TeacherSnapshot>,
    task: usize,
    classes: usize,
    x: &Matrix,
    y: &Matrix,
    cfg: &TrainConfig,
    weights: &LossWeights,
) -> Result<(crate::model::BoundModel, crate::tape::Var)> {
    let bound = model.bind(tape);
    let z = bound.encode(tape, x)?;
    let logits = bound.head_logits(tape, z, task)?;
    let l_cur = current_task_loss(tape, logits, &labels_one_hot(y, classes)?)?;
    let zero = |tape: &mut Tape| tape.leaf(Matrix::scalar(0.0));
    let (l_old, l_d) = match teacher {
        Some(t) if weights.lambda_o > 0.0 || weights.lambda_d > 0.0 => {
            let tb = teacher_batch(t, x, task, weights.lambda_o > 0.0)?;
            let l_old = if weights.lambda_o > 0.0 {
                let student: Vec<_> = (0..task)
                    .map(|o| bound.head_logits(tape, z, o))
                    .collect::<Result<_>>()?;
                old_task_loss(tape, &student, &tb.old_logits, cfg.temperature, cfg.pseudolabels)?
            } else {
                zero(tape)
            };
            let l_d = if weights.lambda_d > 0.0 {
                let mask = if cfg.use_mask {
                    dwdp_mask(y)
                } else {
                    Mask::all_ones(x.rows())
                };
                dwdp_loss(tape, z, &tb.latent, &mask, &cfg.variant)?
            } else {
                zero(tape)
            };
            (l_old, l_d)
        }
        _ => (zero(tape), zero(tape)),
    };
    let total = lwp_total(tape, l_cur, l_old, l_d, weights)?;
    Ok((bound, total))
}

fn diverged(task: usize, epoch: usize, e: Error) -> Error {
    match e {
        Error::NonFinite { op } => Error::Diverged { task, epoch, op },
        other => other,
    }
}

/// Composite loss on a split, evaluated in order in chunks of the batch size
/// and averaged with chunk-size weights.
pub fn split_loss(
    model: &ModelState,
    teacher: Option<&TeacherSnapshot>,
    task: usize,
    classes: usize,
    split: &Split,
    cfg: &TrainConfig,
) -> Result<f64> {
    let weights = cfg.mode.effective_weights(&cfg.weights);
    let n = split.len();
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + cfg.batch_size).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let x = split.x.select_rows(&idx);
        let y = split.y.select_rows(&idx);
        let mut tape = Tape::new();
        let (_, loss) = batch_loss(&mut tape, model, teacher, task, classes, &x, &y, cfg, &weights)?;
        total += tape.value(loss).item() * (end - start) as f64;
        start = end;
    }
    Ok(total / n as f64)
}

/// Trains head `task` of `model` on `data`. The head must already exist.
pub fn train_task(
    mut model: ModelState,
    teacher: Option<&TeacherSnapshot>,
    task: usize,
    data: &TaskSplit,
    cfg: &TrainConfig,
    rng: &mut Rng,
    clock: &dyn Clock,
) -> Result<(ModelState, RunRecord)> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::Empty { op: "train split" });
    }
    if task >= model.task_count() {
        return Err(Error::UnknownTask(task));
    }
    let weights = cfg.mode.effective_weights(&cfg.weights);
    let teacher = if task > 0 && cfg.mode.needs_teacher() {
        Some(teacher.ok_or(Error::MissingTeacher(task))?)
    } else {
        None
    };
    let started = clock.now_secs();
    let mut opt = OptimizerState::new(cfg.adam, model.params());
    let n = data.train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut record = RunRecord {
        task,
        train_losses: Vec::new(),
        val_losses: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
        steps: 0,
        wall_clock_secs: 0.0,
    };
    let mut best_params: Option<ModelState> = None;

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = data.train.x.select_rows(chunk);
            let y = data.train.y.select_rows(chunk);
            let mut tape = Tape::new();
            let (bound, loss) = batch_loss(&mut tape, &model, teacher, task, data.classes, &x, &y, cfg, &weights)
                .map_err(|e| diverged(task, epoch, e))?;
            epoch_loss += tape.value(loss).item() * chunk.len() as f64;
            tape.backward(loss)?;
            let grads = bound.grads(&tape);
            opt.step(model.params_mut(), &grads)?;
            record.steps += 1;
        }
        record.train_losses.push(epoch_loss / n as f64);

        if data.val.is_empty() {
            continue;
        }
        let val = split_loss(&model, teacher, task, data.classes, &data.val, cfg).map_err(|e| diverged(task, epoch, e))?;
        record.val_losses.push(val);
        if best_index(&record.val_losses) == Some(epoch) {
            record.best_epoch = epoch;
            best_params = Some(model.clone());
        }
        if early_stop(&record.val_losses, cfg.patience) {
            record.stopped_early = true;
            break;
        }
    }
    if let Some(best) = best_params {
        model = best;
    } else {
        record.best_epoch = record.train_losses.len() - 1;
    }
    record.wall_clock_secs = clock.now_secs() - started;
    Ok((model, record))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub mode: Mode,
    pub accuracy: AccuracyMatrix,
    pub records: Vec<RunRecord>,
    /// One model for sequential modes, one per task for [`Mode::Stl`].
    pub models: Vec<ModelState>,
    /// Calibration error of the final model(s) on each task's test split.
    pub ece_per_task: Vec<f64>,
    /// Squared-Euclidean Gram deviation of the probe batch between
    /// consecutive task boundaries, one entry per task after the first.
    pub gram_deviation_trace: Vec<f64>,
}

impl ExperimentResult {
    /// Model and head index that answer for `task`.
    pub fn model_for(&self, task: usize) -> (&ModelState, usize) {
        match self.mode {
            Mode::Stl => (&self.models[task], 0),
            _ => (&self.models[0], task),
        }
    }

    pub fn backward_transfer(&self) -> Option<f64> {
        crate::metrics::backward_transfer(&self.accuracy).ok()
    }
}

fn evaluate_row(models: &[ModelState], mode: Mode, stream: &TaskStream, upto: usize) -> Result<Vec<f64>> {
    (0..=upto)
        .map(|i| {
            let (m, head) = match mode {
                Mode::Stl => (&models[i], 0),
                _ => (&models[0], i),
            };
            let test = &stream.tasks()[i].test;
            if test.is_empty() {
                return Err(Error::Empty { op: "test split" });
            }
            accuracy(&m.predict(&test.x, head)?, &test.y)
        })
        .collect()
}

fn probe(stream: &TaskStream) -> Matrix {
    let test = &stream.tasks()[0].test.x;
    let rows: Vec<usize> = (0..test.rows().min(PROBE_ROWS)).collect();
    test.select_rows(&rows)
}

/// Trains every task of `stream` in order and fills the accuracy matrix.
pub fn run_sequence(stream: &TaskStream, cfg: &TrainConfig, clock: &dyn Clock) -> Result<ExperimentResult> {
    run_sequence_with(stream, cfg, clock, &mut |_, _, _| {})
}

/// [`run_sequence`] that hands each freshly trained model and its record to
/// `on_task` at the task boundary.
pub fn run_sequence_with(
    stream: &TaskStream,
    cfg: &TrainConfig,
    clock: &dyn Clock,
    on_task: &mut dyn FnMut(usize, &ModelState, &RunRecord),
) -> Result<ExperimentResult> {
    cfg.validate()?;
    if stream.is_empty() {
        return Err(Error::Empty { op: "task stream" });
    }
    let mut rng = Rng::derived(cfg.seed, TRAIN_STREAM);
    let sizes = cfg.model.sizes(stream.input_dim());
    let probe_x = probe(stream);
    let mut models: Vec<ModelState> = Vec::new();
    let mut records = Vec::new();
    let mut accuracy = AccuracyMatrix::new();
    let mut trace = Vec::new();
    let mut prev_latent: Option<Matrix> = None;

    for (t, task) in stream.tasks().iter().enumerate() {
        let prev = if cfg.mode == Mode::Stl { None } else { models.pop() };
        let (model, teacher) = match prev {
            None => {
                let mut m = ModelState::new(&sizes, cfg.model.activation, &mut rng)?;
                m.add_head(task.classes, &mut rng)?;
                (m, None)
            }
            Some(mut m) => {
                let teacher = cfg.mode.needs_teacher().then(|| m.snapshot());
                m.add_head(task.classes, &mut rng)?;
                (m, teacher)
            }
        };
        let head = if cfg.mode == Mode::Stl { 0 } else { t };
        let (model, mut record) = train_task(model, teacher.as_ref(), head, task, cfg, &mut rng, clock)?;
        record.task = t;
        on_task(t, &model, &record);
        let latent = model.encode(&probe_x)?;
        if let Some(prev) = &prev_latent {
            trace.push(gram_deviation(&latent, prev, &DistanceVariant::SqEuclidean)?);
        }
        prev_latent = Some(latent);
        models.push(model);
        records.push(record);
        accuracy.push_row(evaluate_row(&models, cfg.mode, stream, t)?)?;
    }

    let mut result = ExperimentResult {
        mode: cfg.mode,
        accuracy,
        records,
        models,
        ece_per_task: Vec::new(),
        gram_deviation_trace: trace,
    };
    result.ece_per_task = (0..stream.len())
        .map(|i| {
            let (m, head) = result.model_for(i);
            let test = &stream.tasks()[i].test;
            ece(&m.predict(&test.x, head)?, &test.y, cfg.ece_bins)
        })
        .collect::<Result<_>>()?;
    Ok(result)
}
