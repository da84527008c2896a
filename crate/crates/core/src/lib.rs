#![no_std]

//! Replay-free continual multitask learning.
//!
//! A shared MLP encoder feeds one linear head per task. Each new task is
//! trained against a frozen copy of the previous model with three terms:
//! supervised cross-entropy on the current task, soft-target distillation on
//! the old heads, and a masked pairwise-distance preservation loss that keeps
//! intra-class geometry of the latent space stable.
//!
//! Everything here is pure computation over [`Matrix`] values and needs only
//! `alloc`. File formats, configuration and the command line live in the
//! companion `lwp` crate.

extern crate alloc;

pub mod error;
pub mod losses;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod tape;
pub mod tasks;
pub mod trainer;

pub use crate::error::{Error, Result};
pub use crate::losses::{DistanceVariant, LossWeights, Mask, Sigma};
pub use crate::matrix::Matrix;
pub use crate::metrics::AccuracyMatrix;
pub use crate::model::{Activation, ModelState, TeacherSnapshot};
pub use crate::rng::Rng;
pub use crate::tape::{Tape, Var};
pub use crate::tasks::{Split, TaskSplit, TaskStream};
pub use crate::trainer::{ExperimentResult, Mode, RunRecord, TrainConfig};
