//! Classic methods: closed-form linear and ridge regression over a design
//! matrix, polynomial feature maps, bias/variance/MSE estimator
//! diagnostics, and multi-restart k-means clustering.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Condition-estimate threshold above which the normal equations are
/// rejected as ill-conditioned.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Stacked row inputs `U` (N x d) and supervisions `S` (N).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub inputs: Tensor,
    pub targets: Tensor,
}

impl DesignMatrix {
    pub fn new(inputs: Tensor, targets: Tensor) -> Result<Self> {
        if inputs.rank() != 2 || targets.rank() != 1 || inputs.shape()[0] != targets.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "DesignMatrix",
                lhs: inputs.shape().to_vec(),
                rhs: targets.shape().to_vec(),
            });
        }
        Ok(DesignMatrix { inputs, targets })
    }

    pub fn rows(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.inputs.shape()[1]
    }
}

/// Cholesky factorization of a symmetric positive definite matrix.
/// Returns the lower factor, or an error when a pivot collapses.
fn cholesky(a: &Tensor) -> Result<Tensor> {
    let n = a.shape()[0];
    let mut l = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a.at2(i, j);
            for k in 0..j {
                acc -= l.at2(i, k) * l.at2(j, k);
            }
            if i == j {
                if acc <= 0.0 {
                    return Err(Error::IllConditioned {
                        cond: f64::INFINITY,
                        limit: CONDITION_LIMIT,
                    });
                }
                l.set2(i, j, acc.sqrt());
            } else {
                l.set2(i, j, acc / l.at2(j, j));
            }
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &Tensor, rhs: &Tensor) -> Tensor {
    let n = l.shape()[0];
    // forward substitution L z = rhs
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut acc = rhs.data()[i];
        for k in 0..i {
            acc -= l.at2(i, k) * z[k];
        }
        z[i] = acc / l.at2(i, i);
    }
    // back substitution L^T w = z
    let mut w = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = z[i];
        for k in i + 1..n {
            acc -= l.at2(k, i) * w[k];
        }
        w[i] = acc / l.at2(i, i);
    }
    Tensor::vector(&w)
}

/// 1-norm condition estimate of an SPD matrix via its Cholesky factor:
/// `||A||_1 * ||A^-1||_1`, the inverse norm taken column by column.
fn condition_estimate(a: &Tensor, l: &Tensor) -> f64 {
    let n = a.shape()[0];
    let norm_a = (0..n)
        .map(|j| (0..n).map(|i| a.at2(i, j).abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut norm_inv: f64 = 0.0;
    for j in 0..n {
        let mut e = Tensor::zeros(vec![n]);
        e.data_mut()[j] = 1.0;
        let col = cholesky_solve(l, &e);
        norm_inv = norm_inv.max(col.data().iter().map(|v| v.abs()).sum());
    }
    norm_a * norm_inv
}

fn solve_normal_equations(normal: &Tensor, rhs: &Tensor) -> Result<Tensor> {
    let l = cholesky(normal)?;
    let cond = condition_estimate(normal, &l);
    if cond >= CONDITION_LIMIT {
        return Err(Error::IllConditioned {
            cond,
            limit: CONDITION_LIMIT,
        });
    }
    Ok(cholesky_solve(&l, rhs))
}

/// Least-squares fit via the normal equations: the stationary point of
/// `1/(2N) ||U W - S||^2`, i.e. `W = (U^T U)^-1 U^T S`, solved through a
/// Cholesky factorization with a condition check instead of an explicit
/// inverse.
pub fn linreg_fit(design: &DesignMatrix) -> Result<Tensor> {
    let ut = design.inputs.transpose()?;
    let normal = ut.matmul(&design.inputs)?;
    let rhs = ut.matvec(&design.targets)?;
    solve_normal_equations(&normal, &rhs)
}

/// Ridge fit: minimizes `1/(2N) ||U W - S||^2 + lambda ||W||^2`, whose
/// closed form under this scaling is `(U^T U + 2 N lambda I)^-1 U^T S`.
pub fn ridge_fit(design: &DesignMatrix, lambda: f64) -> Result<Tensor> {
    if lambda < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "ridge lambda must be >= 0, got {lambda}"
        )));
    }
    let ut = design.inputs.transpose()?;
    let mut normal = ut.matmul(&design.inputs)?;
    let shift = 2.0 * design.rows() as f64 * lambda;
    let d = normal.shape()[0];
    for i in 0..d {
        let v = normal.at2(i, i);
        normal.set2(i, i, v + shift);
    }
    let rhs = ut.matvec(&design.targets)?;
    solve_normal_equations(&normal, &rhs)
}

/// Design matrix of polynomial features: row i is
/// `(1, u_i, u_i^2, ..., u_i^degree)`.
pub fn poly_features(samples: &[f64], degree: usize) -> Tensor {
    let cols = degree + 1;
    let mut out = Tensor::zeros(vec![samples.len(), cols]);
    for (i, &u) in samples.iter().enumerate() {
        let mut power = 1.0;
        for j in 0..cols {
            out.set2(i, j, power);
            power *= u;
        }
    }
    out
}

/// Horner evaluation of the fitted polynomial at `u`.
pub fn poly_eval(weights: &Tensor, u: f64) -> f64 {
    weights.data().iter().rev().fold(0.0, |acc, &w| acc * u + w)
}

/// Point-estimator diagnostics over a sample of estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorStats {
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
}

/// Empirical bias, variance and mean squared error of an estimator sample
/// against the true parameter. The three are tied by
/// `mse = variance + bias^2`.
pub fn estimator_stats(estimates: &[f64], truth: f64) -> Result<EstimatorStats> {
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("no estimates".into()));
    }
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let mean_sq = estimates.iter().map(|e| e * e).sum::<f64>() / n;
    let mse = estimates.iter().map(|e| (e - truth) * (e - truth)).sum::<f64>() / n;
    Ok(EstimatorStats {
        bias: mean - truth,
        variance: mean_sq - mean * mean,
        mse,
    })
}

/// Clustering outcome: centroids, per-point assignments and the final
/// distortion `sum_i ||u_i - mu_{c_i}||^2`.
#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centroids: Vec<Tensor>,
    pub assignments: Vec<usize>,
    pub distortion: f64,
    /// Distortion after every assignment step of the winning restart.
    pub history: Vec<f64>,
}

const KMEANS_MAX_ITERATIONS: usize = 500;

fn squared_distance(a: &Tensor, b: &Tensor) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

fn distortion(points: &[Tensor], centroids: &[Tensor], assignments: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &c)| squared_distance(p, &centroids[c]))
        .sum()
}

fn assign(points: &[Tensor], centroids: &[Tensor]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            // argmin with first-wins tie break
            let mut best = 0;
            let mut best_d = squared_distance(p, &centroids[0]);
            for (j, c) in centroids.iter().enumerate().skip(1) {
                let d = squared_distance(p, c);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            best
        })
        .collect()
}

fn lloyd_run(points: &[Tensor], k: usize, rng: &mut Rng) -> KMeansResult {
    let dim = points[0].len();
    // k distinct points as the initial centroids
    let mut centroids: Vec<Tensor> = rng
        .sample_without_replacement(points.len(), k)
        .into_iter()
        .map(|i| points[i].clone())
        .collect();
    let mut assignments = assign(points, &centroids);
    let mut history = vec![distortion(points, &centroids, &assignments)];

    for _ in 0..KMEANS_MAX_ITERATIONS {
        // centroid step: mean of each cluster
        let mut sums = vec![Tensor::zeros(vec![dim]); k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignments) {
            sums[c].add_scaled(p, 1.0).expect("same dims");
            counts[c] += 1;
        }
        for j in 0..k {
            if counts[j] == 0 {
                // empty cluster: reseed at the point farthest from its
                // current centroid
                let farthest = points
                    .iter()
                    .enumerate()
                    .max_by(|(_, a), (_, b)| {
                        let da = squared_distance(a, &centroids[assignments[0]]);
                        let db = squared_distance(b, &centroids[assignments[0]]);
                        da.partial_cmp(&db).expect("finite distances")
                    })
                    .map(|(i, _)| i)
                    .expect("nonempty points");
                centroids[j] = points[farthest].clone();
            } else {
                centroids[j] = sums[j].scale(1.0 / counts[j] as f64);
            }
        }

        let next = assign(points, &centroids);
        let d = distortion(points, &centroids, &next);
        debug_assert!(
            d <= history.last().copied().unwrap_or(f64::INFINITY) + 1e-9,
            "distortion increased"
        );
        history.push(d);
        if next == assignments {
            break;
        }
        assignments = next;
    }
    let final_distortion = *history.last().expect("at least one iteration");
    KMeansResult {
        centroids,
        assignments,
        distortion: final_distortion,
        history,
    }
}

/// Lloyd iterations from `restarts` seeded initializations; keeps the
/// minimum-distortion clustering (earlier restart wins ties).
pub fn kmeans(points: &[Tensor], k: usize, seed: u64, restarts: usize) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if k > points.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the number of points {}",
            points.len()
        )));
    }
    if restarts == 0 {
        return Err(Error::InvalidArgument("need at least one restart".into()));
    }
    let mut best: Option<KMeansResult> = None;
    for restart in 0..restarts {
        let mut rng = Rng::new(seed.wrapping_add(restart as u64));
        let result = lloyd_run(points, k, &mut rng);
        let better = best
            .as_ref()
            .map(|b| result.distortion < b.distortion)
            .unwrap_or(true);
        if better {
            best = Some(result);
        }
    }
    Ok(best.expect("restarts >= 1"))
}
