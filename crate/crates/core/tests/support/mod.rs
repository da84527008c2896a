#![allow(clippy::needless_range_loop)]
//! Independent reference implementations for the integration tests: plain
//! loops over `Vec<Vec<f64>>`, finite differences and brute-force metrics.
#![allow(dead_code)]

use lwp_core::{Matrix, Rng, Tape, Var};

pub type Dense = Vec<Vec<f64>>;

pub fn to_dense(m: &Matrix) -> Dense {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn random_matrix(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.normal() * scale)
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn naive_matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            for t in 0..k {
                out[i][j] += a[i][t] * b[t][j];
            }
        }
    }
    out
}

pub fn naive_sq_dist(z: &Dense) -> Dense {
    z.iter()
        .map(|a| {
            z.iter()
                .map(|b| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
                .collect()
        })
        .collect()
}

pub fn naive_cosine(z: &Dense) -> Dense {
    let norm = |v: &Vec<f64>| v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    z.iter()
        .map(|a| {
            z.iter()
                .map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (norm(a) * norm(b)))
                .collect()
        })
        .collect()
}

pub fn naive_rbf(z: &Dense, sigma: f64) -> Dense {
    naive_sq_dist(z)
        .into_iter()
        .map(|r| r.into_iter().map(|d| (-d / (2.0 * sigma * sigma)).exp()).collect())
        .collect()
}

/// Median of pairwise Euclidean distances over `i < j`, 1.0 if degenerate.
pub fn naive_median_sigma(batches: &[&Dense]) -> f64 {
    let mut d = Vec::new();
    for z in batches {
        let sq = naive_sq_dist(z);
        for i in 0..z.len() {
            for j in i + 1..z.len() {
                d.push(sq[i][j].sqrt());
            }
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = d.len();
    let med = if n % 2 == 1 { d[n / 2] } else { (d[n / 2 - 1] + d[n / 2]) / 2.0 };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// Relation matrix of a named variant; `sigma` only for `rbf`.
pub fn naive_relation(z: &Dense, variant: &str, sigma: f64) -> Dense {
    match variant {
        "sq_euclidean" | "rkd_unmasked" => naive_sq_dist(z),
        "cosine" => naive_cosine(z),
        "rbf_gram" => naive_rbf(z, sigma),
        other => panic!("unknown variant {other}"),
    }
}

/// `1/N^2 * sum_ij m_ij (R_new - R_old)_ij^2` with a double loop.
pub fn naive_dwdp(new: &Dense, old: &Dense, labels: Option<&[f64]>, variant: &str, sigma: f64) -> f64 {
    let n = new.len();
    let a = naive_relation(new, variant, sigma);
    let b = naive_relation(old, variant, sigma);
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let m = match labels {
                Some(l) if l[i] != l[j] => 0.0,
                _ => 1.0,
            };
            s += m * (a[i][j] - b[i][j]).powi(2);
        }
    }
    s / (n * n) as f64
}

pub fn naive_softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn naive_cross_entropy(logits: &Dense, targets: &Dense) -> f64 {
    let n = logits.len() as f64;
    logits
        .iter()
        .zip(targets)
        .map(|(l, t)| {
            let p = naive_softmax(l);
            -t.iter().zip(&p).map(|(ti, pi)| ti * pi.ln()).sum::<f64>()
        })
        .sum::<f64>()
        / n
}

/// First index of the maximum.
pub fn naive_argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn naive_accuracy(logits: &Dense, labels: &[usize]) -> f64 {
    let hits = logits.iter().zip(labels).filter(|(l, &y)| naive_argmax(l) == y).count();
    hits as f64 / labels.len() as f64
}

pub fn naive_bwt(r: &Dense) -> f64 {
    let t = r.len();
    let mut s = 0.0;
    for i in 0..t - 1 {
        s += r[t - 1][i] - r[i][i];
    }
    s / (t - 1) as f64
}

/// ECE by scanning each bin's interval; the last bin is closed on the right.
pub fn naive_ece(logits: &Dense, labels: &[usize], bins: usize) -> f64 {
    let n = labels.len() as f64;
    let conf: Vec<(f64, bool)> = logits
        .iter()
        .zip(labels)
        .map(|(l, &y)| {
            let p = naive_softmax(l);
            let k = naive_argmax(l);
            (p[k], k == y)
        })
        .collect();
    let mut total = 0.0;
    for b in 0..bins {
        let lo = b as f64 / bins as f64;
        let hi = (b + 1) as f64 / bins as f64;
        let members: Vec<&(f64, bool)> = conf
            .iter()
            .filter(|(c, _)| *c >= lo && (*c < hi || (b == bins - 1 && *c <= 1.0)))
            .collect();
        if members.is_empty() {
            continue;
        }
        let m = members.len() as f64;
        let acc = members.iter().filter(|(_, ok)| *ok).count() as f64 / m;
        let avg = members.iter().map(|(c, _)| c).sum::<f64>() / m;
        total += m / n * (acc - avg).abs();
    }
    total
}

pub fn naive_gram_deviation(new: &Dense, old: &Dense, variant: &str, median: bool, sigma: f64) -> f64 {
    let sigma = if median { naive_median_sigma(&[new, old]) } else { sigma };
    let a = naive_relation(new, variant, sigma);
    let b = naive_relation(old, variant, sigma);
    let n = new.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += (a[i][j] - b[i][j]).powi(2);
        }
    }
    s.sqrt() / (n * n) as f64
}

pub fn naive_tanh_layer(x: &Dense, w: &Dense, b: &[f64], act: fn(f64) -> f64) -> Dense {
    naive_matmul(x, w)
        .into_iter()
        .map(|r| r.into_iter().zip(b).map(|(v, bi)| act(v + bi)).collect())
        .collect()
}

/// Builds a scalar objective on a fresh tape from leaves holding `inputs`.
pub type Objective<'a> = dyn Fn(&mut Tape, &[Var]) -> lwp_core::Result<Var> + 'a;

fn evaluate(f: &Objective, inputs: &[Matrix]) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
    let out = f(&mut tape, &vars).unwrap();
    tape.value(out).item()
}

/// Largest relative error `|g - g_fd| / max(|g|, |g_fd|)` over inputs, where
/// each input's gradient is compared as a whole vector with the central
/// difference estimate (step `h`). Falls back to absolute error when both
/// norms are below `1e-8`.
pub fn gradient_check(f: &Objective, inputs: &[Matrix], h: f64) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
    let out = f(&mut tape, &vars).unwrap();
    tape.backward(out).unwrap();
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = tape.grad(vars[k]).clone();
        let mut numeric = vec![0.0; input.len()];
        for (idx, slot) in numeric.iter_mut().enumerate() {
            let mut plus = inputs.to_vec();
            plus[k].as_mut_slice()[idx] += h;
            let mut minus = inputs.to_vec();
            minus[k].as_mut_slice()[idx] -= h;
            *slot = (evaluate(f, &plus) - evaluate(f, &minus)) / (2.0 * h);
        }
        let diff: f64 = analytic
            .as_slice()
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n) * (a - n))
            .sum::<f64>()
            .sqrt();
        let na = analytic.as_slice().iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let scale = na.max(nn);
        let err = if scale < 1e-8 { diff } else { diff / scale };
        worst = worst.max(err);
    }
    worst
}

/// One differentiable operation under test: draws inputs and builds the
/// matching scalar objective for a single random instance.
pub struct GradCase {
    pub name: &'static str,
    pub instance: fn(&mut Rng) -> (Vec<Matrix>, Box<Objective<'static>>),
}

/// `||R . y||_F^2` for a fixed random `R`, turning any output into a scalar.
fn project(tape: &mut Tape, y: Var, r: &Matrix) -> lwp_core::Result<Var> {
    let p = tape.mul_const(y, r)?;
    tape.frobenius_sq(p)
}

fn labels(rng: &mut Rng, n: usize, classes: usize) -> Matrix {
    Matrix::from_fn(n, 1, |_, _| rng.below(classes) as f64)
}

fn distribution_rows(rng: &mut Rng, n: usize, c: usize) -> Matrix {
    let raw = Matrix::from_fn(n, c, |_, _| rng.uniform() + 0.05);
    Matrix::from_fn(n, c, |i, j| raw[(i, j)] / raw.row(i).iter().sum::<f64>())
}

macro_rules! unary {
    ($name:expr, $rows:expr, $cols:expr, $scale:expr, |$t:ident, $x:ident| $body:expr) => {
        GradCase {
            name: $name,
            instance: |rng| {
                let x = random_matrix(rng, $rows, $cols, $scale);
                let r = random_matrix(rng, $rows, $cols, 1.0);
                let f: Box<Objective<'static>> = Box::new(move |$t: &mut Tape, v: &[Var]| {
                    let $x = v[0];
                    let y = $body?;
                    project($t, y, &r)
                });
                (vec![x], f)
            },
        }
    };
}

fn dwdp_case(rng: &mut Rng, variant: lwp_core::DistanceVariant, masked: bool) -> (Vec<Matrix>, Box<Objective<'static>>) {
    use lwp_core::losses::{dwdp_loss, dwdp_mask};
    use lwp_core::Mask;
    let n = 8;
    let z_new = random_matrix(rng, n, 3, 1.0);
    let z_old = random_matrix(rng, n, 3, 1.0);
    let mask = if masked { dwdp_mask(&labels(rng, n, 3)) } else { Mask::all_ones(n) };
    let f: Box<Objective<'static>> = Box::new(move |t: &mut Tape, v: &[Var]| dwdp_loss(t, v[0], &z_old, &mask, &variant));
    (vec![z_new], f)
}

pub fn gradient_cases() -> Vec<GradCase> {
    use lwp_core::losses::{lwp_total, old_task_loss, preservation_loss, PseudolabelMode};
    use lwp_core::{DistanceVariant as D, LossWeights, Sigma};
    vec![
        GradCase {
            name: "matmul",
            instance: |rng| {
                let a = random_matrix(rng, 4, 3, 1.0);
                let b = random_matrix(rng, 3, 5, 1.0);
                let r = random_matrix(rng, 4, 5, 1.0);
                let f: Box<Objective<'static>> = Box::new(move |t: &mut Tape, v: &[Var]| {
                    let y = t.matmul(v[0], v[1])?;
                    project(t, y, &r)
                });
                (vec![a, b], f)
            },
        },
        GradCase {
            name: "add_row",
            instance: |rng| {
                let a = random_matrix(rng, 4, 3, 1.0);
                let b = random_matrix(rng, 1, 3, 1.0);
                let r = random_matrix(rng, 4, 3, 1.0);
                let f: Box<Objective<'static>> = Box::new(move |t: &mut Tape, v: &[Var]| {
                    let y = t.add_row(v[0], v[1])?;
                    project(t, y, &r)
                });
                (vec![a, b], f)
            },
        },
        GradCase {
            name: "add_sub",
            instance: |rng| {
                let a = random_matrix(rng, 4, 3, 1.0);
                let b = random_matrix(rng, 4, 3, 1.0);
                let c = random_matrix(rng, 4, 3, 1.0);
                let r = random_matrix(rng, 4, 3, 1.0);
                let f: Box<Objective<'static>> = Box::new(move |t: &mut Tape, v: &[Var]| {
                    let s = t.add(v[0], v[1])?;
                    let d = t.sub(s, v[2])?;
                    project(t, d, &r)
                });
                (vec![a, b, c], f)
            },
        },
        unary!("sub_const_mul_const", 4, 3, 1.0, |t, x| {
            let y = t.sub_const(x, &Matrix::filled(4, 3, 0.3))?;
            t.mul_const(y, &Matrix::from_fn(4, 3, |i, j| (i + 2 * j) as f64 * 0.25 - 0.5))
        }),
        unary!("scale", 4, 3, 1.0, |t, x| t.scale(x, -0.7)),
        unary!("tanh", 5, 3, 1.5, |t, x| t.tanh(x)),
        unary!("exp", 5, 3, 0.5, |t, x| t.exp(x)),
        GradCase {
            name: "relu",
            instance: |rng| {
                // Keep inputs away from the kink at zero.
                let x = Matrix::from_fn(5, 3, |_, _| {
                    let v = rng.normal();
                    v.signum() * (v.abs() + 0.1)
                });
                let r = random_matrix(rng, 5, 3, 1.0);
                let f: Box<Objective<'static>> = Box::new(move |t: &mut Tape, v: &[Var]| {
                    let y = t.relu(v[0])?;
                    project(t, y, &r)
                });
                (vec![x], f)
            },
        },
        unary!("pairwise_sq_dist", 6, 6, 1.0, |t, x| {
            let w = t.leaf(Matrix::identity(6));
            let z = t.matmul(x, w)?;
            t.pairwise_sq_dist(z)
        }),
        unary!("pairwise_cosine", 6, 6, 1.0, |t, x| t.pairwise_cosine(x)),
        GradCase {
            name: "frobenius_sq",
            instance: |rng| {
                let x = random_matrix(rng, 3, 4, 1.0);
                let f: Box<Objective<'static>> = Box::new(|t: &mut Tape, v: &[Var]| t.frobenius_sq(v[0]));
                (vec![x], f)
            },
        },
        GradCase {
            name: "softmax_cross_entropy",
            instance: |rng| {
                let logits = random_matrix(rng, 5, 3, 2.0);
                let targets = distribution_rows(rng, 5, 3);
                let f: Box<Objective<'static>> =
                    Box::new(move |t: &mut Tape, v: &[Var]| t.softmax_cross_entropy(v[0], &targets));
                (vec![logits], f)
            },
        },
        GradCase {
            name: "dwdp_sq_euclidean_masked",
            instance: |rng| dwdp_case(rng, D::SqEuclidean, true),
        },
        GradCase {
            name: "dwdp_sq_euclidean_unmasked",
            instance: |rng| dwdp_case(rng, D::SqEuclidean, false),
        },
        GradCase {
            name: "dwdp_cosine_masked",
            instance: |rng| dwdp_case(rng, D::Cosine, true),
        },
        GradCase {
            name: "dwdp_cosine_unmasked",
            instance: |rng| dwdp_case(rng, D::Cosine, false),
        },
        GradCase {
            name: "dwdp_rbf_fixed_masked",
            instance: |rng| dwdp_case(rng, D::RbfGram { sigma: Sigma::Fixed(1.5) }, true),
        },
        GradCase {
            name: "dwdp_rbf_fixed_unmasked",
            instance: |rng| dwdp_case(rng, D::RbfGram { sigma: Sigma::Fixed(1.5) }, false),
        },
        GradCase {
            name: "dwdp_rbf_median_masked",
            instance: |rng| dwdp_case(rng, D::RbfGram { sigma: Sigma::Median }, true),
        },
        GradCase {
            name: "dwdp_rbf_median_unmasked",
            instance: |rng| dwdp_case(rng, D::RbfGram { sigma: Sigma::Median }, false),
        },
        GradCase {
            name: "dwdp_rkd_unmasked_masked",
            instance: |rng| dwdp_case(rng, D::RkdUnmasked, true),
        },
        GradCase {
            name: "dwdp_rkd_unmasked_unmasked",
            instance: |rng| dwdp_case(rng, D::RkdUnmasked, false),
        },
        GradCase {
            name: "preservation_loss",
            instance: |rng| {
                let z_new = random_matrix(rng, 7, 4, 1.0);
                let z_old = random_matrix(rng, 7, 4, 1.0);
                let f: Box<Objective<'static>> =
                    Box::new(move |t: &mut Tape, v: &[Var]| preservation_loss(t, v[0], &z_old, &D::SqEuclidean));
                (vec![z_new], f)
            },
        },
        GradCase {
            name: "old_task_loss",
            instance: |rng| {
                let s0 = random_matrix(rng, 6, 2, 1.5);
                let s1 = random_matrix(rng, 6, 3, 1.5);
                let teacher = vec![random_matrix(rng, 6, 2, 1.5), random_matrix(rng, 6, 3, 1.5)];
                let f: Box<Objective<'static>> = Box::new(move |t: &mut Tape, v: &[Var]| {
                    old_task_loss(t, &[v[0], v[1]], &teacher, 2.0, PseudolabelMode::Soft)
                });
                (vec![s0, s1], f)
            },
        },
        GradCase {
            name: "mlp_lwp_total",
            instance: |rng| {
                let x = random_matrix(rng, 6, 3, 1.0);
                let w1 = random_matrix(rng, 3, 5, 0.6);
                let b1 = random_matrix(rng, 1, 5, 0.1);
                let w2 = random_matrix(rng, 5, 2, 0.6);
                let b2 = random_matrix(rng, 1, 2, 0.1);
                let y = labels(rng, 6, 2);
                let onehot = lwp_core::matrix::one_hot(&y, 2).unwrap();
                let z_old = random_matrix(rng, 6, 5, 0.5);
                let teacher = vec![random_matrix(rng, 6, 2, 1.0)];
                let mask = lwp_core::losses::dwdp_mask(&y);
                let weights = LossWeights::new(1.0, 0.5, 0.3).unwrap();
                let f: Box<Objective<'static>> = Box::new(move |t: &mut Tape, v: &[Var]| {
                    let xv = t.leaf(x.clone());
                    let h = t.matmul(xv, v[0])?;
                    let h = t.add_row(h, v[1])?;
                    let z = t.tanh(h)?;
                    let logits = t.matmul(z, v[2])?;
                    let logits = t.add_row(logits, v[3])?;
                    let cur = t.softmax_cross_entropy(logits, &onehot)?;
                    let old = old_task_loss(t, &[logits], &teacher, 1.0, PseudolabelMode::Soft)?;
                    let d = lwp_core::losses::dwdp_loss(t, z, &z_old, &mask, &D::SqEuclidean)?;
                    lwp_total(t, cur, old, d, &weights)
                });
                (vec![w1, b1, w2, b2], f)
            },
        },
    ]
}

/// Random orthogonal matrix from Gram-Schmidt on a Gaussian draw.
pub fn random_rotation(rng: &mut Rng, d: usize) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        for c in &cols {
            let p: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= p * b);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-6 {
            cols.push(v.into_iter().map(|a| a / n).collect());
        }
    }
    Matrix::from_fn(d, d, |i, j| cols[j][i])
}

/// Checks the RBF kernel bound on `pairs` random batches. Each `z'` is a
/// perturbation of `z`; `eps` is the largest squared-distance gap of the pair
/// (nudged up so the gap is strictly below it) and every kernel entry must
/// move by at most `eps / (2 sigma^2)`. Returns `(violations, entries)`.
pub fn kernel_bound_violations(pairs: usize, seed: u64) -> (usize, usize) {
    use lwp_core::losses::relation_matrix;
    use lwp_core::tape::pairwise_sq_dist_matrix;
    use lwp_core::{DistanceVariant, Sigma};
    let mut rng = Rng::derived(seed, 31);
    let mut violations = 0;
    let mut entries = 0;
    for k in 0..pairs {
        let n = 2 + rng.below(7);
        let d = 1 + rng.below(5);
        let scale = 1.0 + rng.uniform() * 2.0;
        let z = random_matrix(&mut rng, n, d, scale);
        let jitter = [1e-4, 1e-2, 0.1, 1.0][k % 4];
        let zp = Matrix::from_fn(n, d, |i, j| z[(i, j)] + rng.normal() * jitter);
        let sigma = rng.uniform_in(0.3, 3.0);
        let variant = DistanceVariant::RbfGram { sigma: Sigma::Fixed(sigma) };
        let dz = pairwise_sq_dist_matrix(&z).unwrap();
        let dzp = pairwise_sq_dist_matrix(&zp).unwrap();
        let gap = dz
            .as_slice()
            .iter()
            .zip(dzp.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let eps = gap * (1.0 + 1e-12) + f64::MIN_POSITIVE;
        let kz = relation_matrix(&z, &variant, Some(sigma)).unwrap();
        let kzp = relation_matrix(&zp, &variant, Some(sigma)).unwrap();
        let bound = eps / (2.0 * sigma * sigma);
        for (a, b) in kz.as_slice().iter().zip(kzp.as_slice()) {
            entries += 1;
            if (a - b).abs() > bound {
                violations += 1;
            }
        }
    }
    (violations, entries)
}

/// Worst absolute difference between each metric and its brute-force
/// counterpart over `instances` random cases:
/// `[accuracy, backward_transfer, ece, gram_deviation]`.
pub fn metric_oracle_errors(instances: usize, seed: u64) -> [f64; 4] {
    use lwp_core::metrics::{accuracy, backward_transfer, ece, gram_deviation};
    use lwp_core::{AccuracyMatrix, DistanceVariant, Sigma};
    let mut rng = Rng::derived(seed, 57);
    let mut worst = [0.0f64; 4];
    for k in 0..instances {
        let n = 1 + rng.below(60);
        let c = 2 + rng.below(4);
        // Some instances are given ties to exercise argmax ordering.
        let logits = if k % 5 == 0 {
            Matrix::from_fn(n, c, |_, _| rng.below(3) as f64)
        } else {
            let scale = 0.5 + rng.uniform() * 4.0;
            random_matrix(&mut rng, n, c, scale)
        };
        let y: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
        let yl = Matrix::from_fn(n, 1, |i, _| y[i] as f64);
        let dl = to_dense(&logits);
        worst[0] = worst[0].max((accuracy(&logits, &yl).unwrap() - naive_accuracy(&dl, &y)).abs());

        let t = 2 + rng.below(6);
        let rows: Dense = (0..t).map(|r| (0..=r).map(|_| rng.uniform()).collect()).collect();
        let am = AccuracyMatrix::from_rows(rows.clone()).unwrap();
        worst[1] = worst[1].max((backward_transfer(&am).unwrap() - naive_bwt(&rows)).abs());

        let bins = 2 + rng.below(19);
        worst[2] = worst[2].max((ece(&logits, &yl, bins).unwrap() - naive_ece(&dl, &y, bins)).abs());

        let m = 1 + rng.below(12);
        let dim = 1 + rng.below(5);
        let a = random_matrix(&mut rng, m, dim, 1.0);
        let b = random_matrix(&mut rng, m, dim, 1.0);
        let (da, db) = (to_dense(&a), to_dense(&b));
        let sigma = rng.uniform_in(0.5, 2.0);
        let cases = [
            (DistanceVariant::SqEuclidean, "sq_euclidean", false),
            (DistanceVariant::Cosine, "cosine", false),
            (DistanceVariant::RbfGram { sigma: Sigma::Fixed(sigma) }, "rbf_gram", false),
            (DistanceVariant::RbfGram { sigma: Sigma::Median }, "rbf_gram", true),
            (DistanceVariant::RkdUnmasked, "rkd_unmasked", false),
        ];
        for (variant, name, median) in cases {
            let got = gram_deviation(&a, &b, &variant).unwrap();
            let want = naive_gram_deviation(&da, &db, name, median, sigma);
            worst[3] = worst[3].max((got - want).abs());
        }
    }
    worst
}
