//! Evaluation metrics: accuracy, backward transfer, calibration error and
//! latent Gram deviation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::losses::{median_distance, relation_matrix, DistanceVariant, Sigma};
use crate::matrix::{softmax_rows, Matrix};
use crate::tape::pairwise_sq_dist_matrix;

/// `R[t][i]`: accuracy on task `i` after training through task `t`, `i <= t`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from lower-triangular rows; row `t` must have `t + 1` entries
    /// in `[0, 1]`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut m = Self::new();
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.rows.len() + 1 {
            return Err(Error::InvalidParam {
                name: "accuracy row",
                reason: format!("row {} needs {} entries, got {}", self.rows.len(), self.rows.len() + 1, row.len()),
            });
        }
        if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParam {
                name: "accuracy row",
                reason: format!("entry {v} outside [0, 1]"),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn tasks(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, after: usize, task: usize) -> Option<f64> {
        self.rows.get(after).and_then(|r| r.get(task)).copied()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Mean of the last row.
    pub fn final_average(&self) -> Option<f64> {
        let last = self.rows.last()?;
        Some(last.iter().sum::<f64>() / last.len() as f64)
    }
}

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
pub fn accuracy(logits: &Matrix, labels: &Matrix) -> Result<f64> {
    check_aligned(logits, labels, "accuracy")?;
    let correct = logits
        .argmax_rows()
        .into_iter()
        .enumerate()
        .filter(|&(i, p)| labels[(i, 0)] == p as f64)
        .count();
    Ok(correct as f64 / logits.rows() as f64)
}

fn check_aligned(logits: &Matrix, labels: &Matrix, op: &'static str) -> Result<()> {
    if logits.rows() == 0 {
        return Err(Error::Empty { op });
    }
    if labels.rows() != logits.rows() || labels.cols() != 1 {
        return Err(Error::Shape {
            op,
            lhs: logits.shape(),
            rhs: labels.shape(),
        });
    }
    Ok(())
}

/// Mean over earlier tasks of `R[T-1][i] - R[i][i]`.
pub fn backward_transfer(r: &AccuracyMatrix) -> Result<f64> {
    let t = r.tasks();
    if t < 2 {
        return Err(Error::InvalidParam {
            name: "accuracy matrix",
            reason: format!("backward transfer needs at least 2 tasks, got {t}"),
        });
    }
    let last = &r.rows[t - 1];
    let sum: f64 = (0..t - 1).map(|i| last[i] - r.rows[i][i]).sum();
    Ok(sum / (t - 1) as f64)
}

/// Equal-width confidence histogram. Bin `b` holds confidences in
/// `[b/B, (b+1)/B)`, the last bin also takes 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationBins {
    pub edges: Vec<f64>,
    pub confidence_sum: Vec<f64>,
    pub correct: Vec<f64>,
    pub count: Vec<usize>,
}

impl CalibrationBins {
    pub fn total(&self) -> usize {
        self.count.iter().sum()
    }

    pub fn ece(&self) -> f64 {
        let n = self.total() as f64;
        (0..self.count.len())
            .filter(|&b| self.count[b] > 0)
            .map(|b| {
                let c = self.count[b] as f64;
                (c / n) * (self.correct[b] / c - self.confidence_sum[b] / c).abs()
            })
            .sum()
    }
}

pub fn calibration_bins(logits: &Matrix, labels: &Matrix, bins: usize) -> Result<CalibrationBins> {
    check_aligned(logits, labels, "ece")?;
    if bins < 2 {
        return Err(Error::InvalidParam {
            name: "bins",
            reason: format!("need at least 2 bins, got {bins}"),
        });
    }
    let probs = softmax_rows(logits);
    let preds = logits.argmax_rows();
    let mut out = CalibrationBins {
        edges: (0..=bins).map(|b| b as f64 / bins as f64).collect(),
        confidence_sum: vec![0.0; bins],
        correct: vec![0.0; bins],
        count: vec![0; bins],
    };
    for (i, &p) in preds.iter().enumerate() {
        let conf = probs[(i, p)];
        let b = ((conf * bins as f64) as usize).min(bins - 1);
        out.confidence_sum[b] += conf;
        out.count[b] += 1;
        if labels[(i, 0)] == p as f64 {
            out.correct[b] += 1.0;
        }
    }
    Ok(out)
}

/// Expected calibration error over max-softmax confidence.
pub fn ece(logits: &Matrix, labels: &Matrix, bins: usize) -> Result<f64> {
    Ok(calibration_bins(logits, labels, bins)?.ece())
}

/// `1/N^2 * ||M(z_new) - M(z_old)||_F` for the variant's relation matrix.
///
/// `rkd_unmasked` is treated as `sq_euclidean`. With a median bandwidth the
/// median is taken over the pairwise distances of both batches together, so
/// the result is symmetric in its arguments.
pub fn gram_deviation(z_new: &Matrix, z_old: &Matrix, variant: &DistanceVariant) -> Result<f64> {
    z_new.expect_same_shape(z_old, "gram_deviation")?;
    let n = z_new.rows();
    if n == 0 {
        return Err(Error::Empty { op: "gram_deviation" });
    }
    let sigma = match variant {
        DistanceVariant::RbfGram { sigma: Sigma::Fixed(s) } => Some(*s),
        DistanceVariant::RbfGram { sigma: Sigma::Median } => {
            let a = pairwise_sq_dist_matrix(z_new)?;
            let b = pairwise_sq_dist_matrix(z_old)?;
            Some(joint_median_sigma(&a, &b))
        }
        _ => None,
    };
    let a = relation_matrix(z_new, variant, sigma)?;
    let b = relation_matrix(z_old, variant, sigma)?;
    let sq: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(libm::sqrt(sq) / (n * n) as f64)
}

/// Median bandwidth over the union of both batches' within-batch pairs.
fn joint_median_sigma(a: &Matrix, b: &Matrix) -> f64 {
    let n = a.rows();
    let mut pairs = Vec::with_capacity(n * n);
    for m in [a, b] {
        for i in 0..n {
            pairs.extend((i + 1..n).map(|j| m[(i, j)]));
        }
    }
    median_distance(pairs)
}
