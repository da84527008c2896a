use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("{op}: empty input")]
    Empty { op: &'static str },
    #[error("backward requires a 1x1 root, got {0:?}")]
    NonScalarRoot((usize, usize)),
    #[error("backward already ran on this tape")]
    BackwardTwice,
    #[error("node {node} references a later node {parent}")]
    Cycle { node: usize, parent: usize },
    #[error("target row {row} sums to {sum}, expected 1")]
    TargetNotDistribution { row: usize, sum: f64 },
    #[error("need at least {min} classes, got {got}")]
    TooFewClasses { min: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: f64, classes: usize },
    #[error("unknown task index {0}")]
    UnknownTask(usize),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("training diverged: non-finite {op} at task {task}, epoch {epoch}")]
    Diverged {
        task: usize,
        epoch: usize,
        op: &'static str,
    },
    #[error("teacher snapshot required for task {0} but none given")]
    MissingTeacher(usize),
}
