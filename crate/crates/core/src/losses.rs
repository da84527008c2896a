//! Loss terms of the composite objective.
//!
//! The objective for task `t` is
//!
//! ```text
//! L = lambda_c * L_cur + lambda_o * L_old + lambda_d * L_dwdp
//! ```
//!
//! where `L_cur` is cross-entropy on the current head, `L_old` distills the
//! frozen teacher's old heads into the student, and `L_dwdp` penalizes
//! changes of pairwise latent relations between same-label samples:
//!
//! ```text
//! L_dwdp = 1/N^2 * sum_ij m_ij (d(z_i, z_j) - d(z'_i, z'_j))^2,   m_ij = [y_i == y_j]
//! ```
//!
//! All preservation variants are normalized by `N^2` so that `lambda_d` does
//! not depend on batch size.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{label_index, softmax_rows, Matrix};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_c: f64,
    pub lambda_o: f64,
    pub lambda_d: f64,
}

impl LossWeights {
    pub fn new(lambda_c: f64, lambda_o: f64, lambda_d: f64) -> Result<Self> {
        for (name, v) in [("lambda_c", lambda_c), ("lambda_o", lambda_o), ("lambda_d", lambda_d)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        Ok(Self {
            lambda_c,
            lambda_o,
            lambda_d,
        })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_c: 1.0,
            lambda_o: 1.0,
            lambda_d: 0.01,
        }
    }
}

/// Bandwidth of the RBF variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma {
    Fixed(f64),
    /// Median of the teacher's pairwise Euclidean distances in the batch.
    Median,
}

/// Pairwise relation `d(z_i, z_j)` compared between student and teacher.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistanceVariant {
    SqEuclidean,
    Cosine,
    RbfGram { sigma: Sigma },
    /// Squared Euclidean over all pairs; the class mask is ignored.
    RkdUnmasked,
}

impl DistanceVariant {
    pub fn name(&self) -> &'static str {
        match self {
            DistanceVariant::SqEuclidean => "sq_euclidean",
            DistanceVariant::Cosine => "cosine",
            DistanceVariant::RbfGram { .. } => "rbf_gram",
            DistanceVariant::RkdUnmasked => "rkd_unmasked",
        }
    }

    /// Parses a variant name. `sigma` must be given iff the name is
    /// `rbf_gram`.
    pub fn parse(name: &str, sigma: Option<Sigma>) -> Result<Self> {
        let v = match name {
            "sq_euclidean" => DistanceVariant::SqEuclidean,
            "cosine" => DistanceVariant::Cosine,
            "rkd_unmasked" => DistanceVariant::RkdUnmasked,
            "rbf_gram" => {
                return match sigma {
                    Some(Sigma::Fixed(s)) if !(s.is_finite() && s > 0.0) => Err(Error::InvalidParam {
                        name: "sigma",
                        reason: format!("must be > 0, got {s}"),
                    }),
                    Some(s) => Ok(DistanceVariant::RbfGram { sigma: s }),
                    None => Err(Error::InvalidParam {
                        name: "sigma",
                        reason: "rbf_gram needs a sigma".into(),
                    }),
                }
            }
            other => {
                return Err(Error::InvalidParam {
                    name: "variant",
                    reason: format!("unknown distance variant {other:?}"),
                })
            }
        };
        if sigma.is_some() {
            return Err(Error::InvalidParam {
                name: "sigma",
                reason: format!("sigma only applies to rbf_gram, not {name}"),
            });
        }
        Ok(v)
    }

    pub fn uses_mask(&self) -> bool {
        !matches!(self, DistanceVariant::RkdUnmasked)
    }
}

/// Symmetric binary pair mask with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask(Matrix);

impl Mask {
    pub fn all_ones(n: usize) -> Self {
        Mask(Matrix::filled(n, n, 1.0))
    }

    pub fn from_matrix(m: Matrix) -> Result<Self> {
        let n = m.rows();
        if m.cols() != n {
            return Err(Error::Shape {
                op: "mask",
                lhs: m.shape(),
                rhs: (n, n),
            });
        }
        for i in 0..n {
            if m[(i, i)] != 1.0 {
                return Err(Error::InvalidParam {
                    name: "mask",
                    reason: format!("diagonal entry {i} is not 1"),
                });
            }
            for j in 0..n {
                let v = m[(i, j)];
                if (v != 0.0 && v != 1.0) || v != m[(j, i)] {
                    return Err(Error::InvalidParam {
                        name: "mask",
                        reason: format!("entry ({i},{j}) breaks binary symmetry"),
                    });
                }
            }
        }
        Ok(Mask(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }
}

/// `m_ij = 1` iff samples `i` and `j` share a current-task label.
pub fn dwdp_mask(labels: &Matrix) -> Mask {
    let n = labels.rows();
    Mask(Matrix::from_fn(n, n, |i, j| {
        if labels[(i, 0)] == labels[(j, 0)] {
            1.0
        } else {
            0.0
        }
    }))
}

/// Median of `sqrt(D_ij)` over `i < j`; 1.0 when undefined or zero.
pub fn median_sigma(sq_dist: &Matrix) -> f64 {
    let n = sq_dist.rows();
    median_distance((0..n).flat_map(|i| (i + 1..n).map(move |j| sq_dist[(i, j)])))
}

/// Median of the square roots of `sq_distances`; 1.0 when empty or zero.
pub fn median_distance(sq_distances: impl IntoIterator<Item = f64>) -> f64 {
    let mut d: Vec<f64> = sq_distances.into_iter().map(libm::sqrt).collect();
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let med = if d.len().is_multiple_of(2) {
        0.5 * (d[mid - 1] + d[mid])
    } else {
        d[mid]
    };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// Concrete bandwidth for `variant` given the teacher batch.
pub fn resolve_sigma(variant: &DistanceVariant, z_old: &Matrix) -> Result<Option<f64>> {
    match variant {
        DistanceVariant::RbfGram { sigma: Sigma::Fixed(s) } => Ok(Some(*s)),
        DistanceVariant::RbfGram { sigma: Sigma::Median } => {
            let d = crate::tape::pairwise_sq_dist_matrix(z_old)?;
            Ok(Some(median_sigma(&d)))
        }
        _ => Ok(None),
    }
}

fn relation_var(tape: &mut Tape, z: Var, variant: &DistanceVariant, sigma: Option<f64>) -> Result<Var> {
    match variant {
        DistanceVariant::SqEuclidean | DistanceVariant::RkdUnmasked => tape.pairwise_sq_dist(z),
        DistanceVariant::Cosine => tape.pairwise_cosine(z),
        DistanceVariant::RbfGram { .. } => {
            let s = sigma.expect("sigma resolved for rbf_gram");
            let d = tape.pairwise_sq_dist(z)?;
            let scaled = tape.scale(d, -1.0 / (2.0 * s * s))?;
            tape.exp(scaled)
        }
    }
}

/// The variant's N x N relation matrix of a plain batch. Uses the same
/// arithmetic as the differentiable path.
pub fn relation_matrix(z: &Matrix, variant: &DistanceVariant, sigma: Option<f64>) -> Result<Matrix> {
    let mut scratch = Tape::new();
    let v = scratch.leaf(z.clone());
    let r = relation_var(&mut scratch, v, variant, sigma)?;
    Ok(scratch.value(r).clone())
}

fn check_pair(tape: &Tape, z_new: Var, z_old: &Matrix, op: &'static str) -> Result<usize> {
    let zn = tape.value(z_new);
    zn.expect_same_shape(z_old, op)?;
    if zn.rows() == 0 {
        return Err(Error::Empty { op });
    }
    Ok(zn.rows())
}

fn masked_preservation(
    tape: &mut Tape,
    z_new: Var,
    z_old: &Matrix,
    mask: Option<&Mask>,
    variant: &DistanceVariant,
) -> Result<Var> {
    let n = check_pair(tape, z_new, z_old, "preservation_loss")?;
    let sigma = resolve_sigma(variant, z_old)?;
    let old_rel = relation_matrix(z_old, variant, sigma)?;
    let new_rel = relation_var(tape, z_new, variant, sigma)?;
    let mut diff = tape.sub_const(new_rel, &old_rel)?;
    if let Some(m) = mask {
        if m.len() != n {
            return Err(Error::Shape {
                op: "dwdp_loss",
                lhs: (m.len(), m.len()),
                rhs: (n, n),
            });
        }
        diff = tape.mul_const(diff, m.matrix())?;
    }
    let sq = tape.frobenius_sq(diff)?;
    tape.scale(sq, 1.0 / (n * n) as f64)
}

/// Unmasked preservation loss `1/N^2 * ||M(z_new) - M(z_old)||_F^2` for the
/// variant's relation matrix `M`.
pub fn preservation_loss(tape: &mut Tape, z_new: Var, z_old: &Matrix, variant: &DistanceVariant) -> Result<Var> {
    masked_preservation(tape, z_new, z_old, None, variant)
}

/// Preservation loss restricted to pairs with `m_ij = 1`. The `rkd_unmasked`
/// variant ignores the mask.
pub fn dwdp_loss(
    tape: &mut Tape,
    z_new: Var,
    z_old: &Matrix,
    mask: &Mask,
    variant: &DistanceVariant,
) -> Result<Var> {
    let mask = variant.uses_mask().then_some(mask);
    masked_preservation(tape, z_new, z_old, mask, variant)
}

/// Cross-entropy of the current head against one-hot labels.
pub fn current_task_loss(tape: &mut Tape, logits: Var, one_hot: &Matrix) -> Result<Var> {
    tape.softmax_cross_entropy(logits, one_hot)
}

/// How teacher logits become distillation targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PseudolabelMode {
    /// `softmax(teacher / tau)`.
    #[default]
    Soft,
    /// One-hot argmax of the teacher logits.
    Hard,
}

/// `sum_o CE(targets(teacher_o / tau), student_o / tau)`, zero for an empty
/// list.
pub fn old_task_loss(
    tape: &mut Tape,
    student_logits: &[Var],
    teacher_logits: &[Matrix],
    temperature: f64,
    mode: PseudolabelMode,
) -> Result<Var> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::InvalidParam {
            name: "temperature",
            reason: format!("must be > 0, got {temperature}"),
        });
    }
    if student_logits.len() != teacher_logits.len() {
        return Err(Error::Shape {
            op: "old_task_loss",
            lhs: (student_logits.len(), 0),
            rhs: (teacher_logits.len(), 0),
        });
    }
    let mut total: Option<Var> = None;
    for (&s, t) in student_logits.iter().zip(teacher_logits) {
        tape.value(s).expect_same_shape(t, "old_task_loss")?;
        let targets = match mode {
            PseudolabelMode::Soft => softmax_rows(&t.map(|v| v / temperature)),
            PseudolabelMode::Hard => {
                let mut oh = Matrix::zeros(t.rows(), t.cols());
                for (i, c) in t.argmax_rows().into_iter().enumerate() {
                    oh[(i, c)] = 1.0;
                }
                oh
            }
        };
        let scaled = if temperature == 1.0 {
            s
        } else {
            tape.scale(s, 1.0 / temperature)?
        };
        let ce = tape.softmax_cross_entropy(scaled, &targets)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, ce)?,
            None => ce,
        });
    }
    Ok(total.unwrap_or_else(|| tape.leaf(Matrix::scalar(0.0))))
}

/// `lambda_c * l_cur + lambda_o * l_old + lambda_d * l_dwdp`.
pub fn lwp_total(tape: &mut Tape, l_cur: Var, l_old: Var, l_dwdp: Var, w: &LossWeights) -> Result<Var> {
    for v in [l_cur, l_old, l_dwdp] {
        let shape = tape.value(v).shape();
        if shape != (1, 1) {
            return Err(Error::NonScalarRoot(shape));
        }
    }
    let c = tape.scale(l_cur, w.lambda_c)?;
    let o = tape.scale(l_old, w.lambda_o)?;
    let d = tape.scale(l_dwdp, w.lambda_d)?;
    let co = tape.add(c, o)?;
    tape.add(co, d)
}

/// Checks labels against `classes` and returns them one-hot.
pub fn labels_one_hot(labels: &Matrix, classes: usize) -> Result<Matrix> {
    let mut out = Matrix::zeros(labels.rows(), classes);
    for i in 0..labels.rows() {
        out[(i, label_index(labels[(i, 0)], classes)?)] = 1.0;
    }
    Ok(out)
}
