//! Gradient-based optimizers and the finite-difference gradient checker.
//!
//! All updates are elementwise, deterministic, and walk the parameter set
//! in key order. Freezing (used by transfer surgery) is handled here, at
//! gradient-application time, so gradients themselves stay complete.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::params::{GradSet, ParamSet};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Adam hyperparameters. Defaults are the standard recommended settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub tau: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            tau: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates and step counter for Adam. (S)GD needs no state.
///
/// The raw moments are stored; bias correction divides non-destructively by
/// `1 - beta^t` with `t` starting at 1 on the first step, so the first
/// update is well defined.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub m1: GradSet,
    pub m2: GradSet,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(params: &ParamSet) -> Self {
        OptimizerState {
            m1: params.zeros_like(),
            m2: params.zeros_like(),
            t: 0,
        }
    }
}

/// Stopping rule for iterative descent; at least one criterion must be set.
#[derive(Debug, Clone, Copy)]
pub struct StopCriterion {
    pub max_iterations: usize,
    pub grad_tol: Option<f64>,
    pub param_tol: Option<f64>,
}

impl StopCriterion {
    pub fn max_iterations(k: usize) -> Self {
        StopCriterion {
            max_iterations: k,
            grad_tol: None,
            param_tol: None,
        }
    }

    pub fn done(&self, iteration: usize, grad_norm: f64, param_change: f64) -> bool {
        if iteration >= self.max_iterations {
            return true;
        }
        if let Some(tol) = self.grad_tol {
            if grad_norm < tol {
                return true;
            }
        }
        if let Some(tol) = self.param_tol {
            if param_change < tol {
                return true;
            }
        }
        false
    }
}

fn no_frozen() -> BTreeSet<String> {
    BTreeSet::new()
}

/// Plain gradient-descent update `theta <- theta - tau * grad`.
pub fn gd_step(params: &mut ParamSet, grads: &GradSet, tau: f64) -> Result<()> {
    gd_step_frozen(params, grads, tau, &no_frozen())
}

/// [`gd_step`] that leaves the named tensors untouched.
pub fn gd_step_frozen(
    params: &mut ParamSet,
    grads: &GradSet,
    tau: f64,
    frozen: &BTreeSet<String>,
) -> Result<()> {
    params.check_mirrors(grads)?;
    for (name, theta) in params.iter_mut() {
        if frozen.contains(name) {
            continue;
        }
        theta.add_scaled(grads.get(name).expect("mirror checked"), -tau)?;
    }
    Ok(())
}

/// Uniform sample from `{0, .., n-1}`, deterministic under the seed.
pub fn sgd_sample(n: usize, rng: &mut Rng) -> usize {
    rng.index(n)
}

/// Mini-batch update: `theta <- theta - tau * mean(grads)`, with the mean
/// accumulated over the samples in the order given.
pub fn minibatch_step(params: &mut ParamSet, sample_grads: &[GradSet], tau: f64) -> Result<()> {
    if sample_grads.is_empty() {
        return Err(Error::InvalidArgument("empty mini batch".into()));
    }
    let mut mean = sample_grads[0].clone();
    for g in &sample_grads[1..] {
        mean.add_scaled(g, 1.0)?;
    }
    let scale = 1.0 / sample_grads.len() as f64;
    for (_, t) in mean.iter_mut() {
        *t = t.scale(scale);
    }
    gd_step(params, &mean, tau)
}

/// One Adam update with bias-corrected moment estimates.
pub fn adam_step(
    state: &mut OptimizerState,
    params: &mut ParamSet,
    grads: &GradSet,
    hp: &AdamParams,
) -> Result<()> {
    adam_step_frozen(state, params, grads, hp, &no_frozen())
}

/// [`adam_step`] that skips both update and moment tracking for frozen
/// tensors.
pub fn adam_step_frozen(
    state: &mut OptimizerState,
    params: &mut ParamSet,
    grads: &GradSet,
    hp: &AdamParams,
    frozen: &BTreeSet<String>,
) -> Result<()> {
    params.check_mirrors(grads)?;
    params.check_mirrors(&state.m1)?;
    state.t += 1;
    let t = state.t as f64;
    let bias1 = 1.0 - hp.beta1.powf(t);
    let bias2 = 1.0 - hp.beta2.powf(t);
    for (name, theta) in params.iter_mut() {
        if frozen.contains(name) {
            continue;
        }
        let g = grads.get(name).expect("mirror checked");
        let m1 = state.m1.get_mut(name).expect("mirror checked");
        let m2 = state.m2.get_mut(name).expect("mirror checked");
        for i in 0..theta.len() {
            let gi = g.data()[i];
            let m1i = hp.beta1 * m1.data()[i] + (1.0 - hp.beta1) * gi;
            let m2i = hp.beta2 * m2.data()[i] + (1.0 - hp.beta2) * gi * gi;
            m1.data_mut()[i] = m1i;
            m2.data_mut()[i] = m2i;
            let m1_hat = m1i / bias1;
            let m2_hat = m2i / bias2;
            theta.data_mut()[i] -= hp.tau * m1_hat / (m2_hat.sqrt() + hp.epsilon);
        }
    }
    Ok(())
}

/// Rescales `g` to Euclidean norm `threshold` when it exceeds it; zero and
/// small gradients pass through unchanged.
pub fn clip_gradient(g: &Tensor, threshold: f64) -> Tensor {
    assert!(threshold > 0.0, "clip threshold must be positive");
    let norm = g.norm_l2();
    if norm >= threshold && norm > 0.0 {
        g.scale(threshold / norm)
    } else {
        g.clone()
    }
}

/// Applies [`clip_gradient`] to every named tensor independently.
pub fn clip_gradset(grads: &mut GradSet, threshold: f64) {
    for (_, g) in grads.iter_mut() {
        *g = clip_gradient(g, threshold);
    }
}

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    /// Name of the tensor holding the worst entry.
    pub worst_entry: String,
    pub entries: usize,
}

/// Central-difference check of `analytic` against `loss` around `params`:
/// `(L(theta + h e_i) - L(theta - h e_i)) / 2h` per coordinate, compared
/// with relative error `|a - n| / (|a| + |n| + 1e-12)`.
pub fn gradient_check<F>(
    mut loss: F,
    params: &ParamSet,
    analytic: &GradSet,
    h: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamSet) -> Result<f64>,
{
    params.check_mirrors(analytic)?;
    let analytic_flat = analytic.flatten();
    let mut work = params.clone();
    let total = work.scalar_count();
    if total == 0 {
        return Err(Error::InvalidArgument("no parameters to check".into()));
    }

    let mut max_rel = 0.0f64;
    let mut sum_rel = 0.0f64;
    let mut worst = String::new();
    for i in 0..total {
        let (name, original) = {
            let (name, entry) = work.flat_entry_mut(i).expect("index in range");
            (name.to_string(), *entry)
        };
        *work.flat_entry_mut(i).unwrap().1 = original + h;
        let plus = loss(&work)?;
        *work.flat_entry_mut(i).unwrap().1 = original - h;
        let minus = loss(&work)?;
        *work.flat_entry_mut(i).unwrap().1 = original;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite("gradient_check loss evaluation"));
        }
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic_flat[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
        sum_rel += rel;
        if rel > max_rel {
            max_rel = rel;
            worst = name;
        }
    }
    Ok(GradCheckReport {
        max_rel_err: max_rel,
        mean_rel_err: sum_rel / total as f64,
        worst_entry: worst,
        entries: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(name: &str, t: Tensor) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert(name, t).unwrap();
        p
    }

    #[test]
    fn gd_zero_grad_is_identity() {
        let mut params = single("w", Tensor::vector(&[1.0, -2.0]));
        let before = params.clone();
        let grads = params.zeros_like();
        gd_step(&mut params, &grads, 0.5).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn gd_arithmetic() {
        let mut params = single("w", Tensor::scalar(5.0));
        let grads = single("w", Tensor::scalar(2.0));
        gd_step(&mut params, &grads, 0.1).unwrap();
        assert!((params.get("w").unwrap().data()[0] - 4.8).abs() < 1e-15);
    }

    #[test]
    fn gd_contracts_on_quadratic() {
        // loss = theta^2 / 2, grad = theta; |theta| strictly decreases for
        // tau < 2 until the minimizer is hit exactly (tau = 1 lands on 0).
        for tau in [0.1, 0.5, 1.0, 1.9] {
            let mut theta = 3.0f64;
            for _ in 0..20 {
                let prev = theta.abs();
                theta -= tau * theta;
                assert!(theta.abs() < prev || prev == 0.0, "tau={tau}");
            }
        }
    }

    #[test]
    fn gd_key_mismatch_rejected() {
        let mut params = single("w", Tensor::scalar(1.0));
        let grads = single("v", Tensor::scalar(1.0));
        assert!(gd_step(&mut params, &grads, 0.1).is_err());
    }

    #[test]
    fn sgd_sample_degenerate_and_deterministic() {
        let mut rng = Rng::new(1);
        for _ in 0..10 {
            assert_eq!(sgd_sample(1, &mut rng), 0);
        }
        let seq_a: Vec<usize> = {
            let mut rng = Rng::new(99);
            (0..32).map(|_| sgd_sample(7, &mut rng)).collect()
        };
        let seq_b: Vec<usize> = {
            let mut rng = Rng::new(99);
            (0..32).map(|_| sgd_sample(7, &mut rng)).collect()
        };
        assert_eq!(seq_a, seq_b);
    }

    #[test]
    fn sgd_sample_chi_squared_uniformity() {
        // 1e5 draws over 10 bins; chi^2 critical value for df=9 at the
        // 0.001 significance level is 27.877.
        let mut rng = Rng::new(2024);
        let draws = 100_000usize;
        let mut counts = [0usize; 10];
        for _ in 0..draws {
            counts[sgd_sample(10, &mut rng)] += 1;
        }
        let expected = draws as f64 / 10.0;
        let stat: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(stat < 27.877, "chi^2 = {stat}, counts {counts:?}");
    }

    #[test]
    fn minibatch_of_one_is_sgd() {
        let grads = single("w", Tensor::scalar(2.0));
        let mut a = single("w", Tensor::scalar(5.0));
        let mut b = a.clone();
        minibatch_step(&mut a, &[grads.clone()], 0.1).unwrap();
        gd_step(&mut b, &grads, 0.1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn minibatch_full_pass_is_gd_on_mean() {
        let g1 = single("w", Tensor::scalar(1.0));
        let g2 = single("w", Tensor::scalar(3.0));
        let mean = single("w", Tensor::scalar(2.0));
        let mut a = single("w", Tensor::scalar(0.0));
        let mut b = a.clone();
        minibatch_step(&mut a, &[g1, g2], 0.25).unwrap();
        gd_step(&mut b, &mean, 0.25).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn minibatch_duplicate_sample_mean_invariance() {
        let g = single("w", Tensor::scalar(1.5));
        let mut a = single("w", Tensor::scalar(1.0));
        let mut b = a.clone();
        minibatch_step(&mut a, &[g.clone(), g.clone()], 0.3).unwrap();
        minibatch_step(&mut b, &[g], 0.3).unwrap();
        for (x, y) in a
            .get("w")
            .unwrap()
            .data()
            .iter()
            .zip(b.get("w").unwrap().data())
        {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn minibatch_empty_rejected() {
        let mut params = single("w", Tensor::scalar(1.0));
        assert!(minibatch_step(&mut params, &[], 0.1).is_err());
    }

    #[test]
    fn adam_defaults_match_recommended_values() {
        let hp = AdamParams::default();
        assert_eq!(hp.tau, 0.001);
        assert_eq!(hp.beta1, 0.9);
        assert_eq!(hp.beta2, 0.999);
        assert_eq!(hp.epsilon, 1e-8);
    }

    #[test]
    fn adam_first_step_is_signed_step_size() {
        let g = Tensor::vector(&[0.5, -1.25, 2.0, -0.01]);
        let mut params = single("w", Tensor::zeros(vec![4]));
        let grads = single("w", g.clone());
        let mut state = OptimizerState::new(&params);
        let hp = AdamParams::default();
        adam_step(&mut state, &mut params, &grads, &hp).unwrap();
        for (i, &gi) in g.data().iter().enumerate() {
            let expect = -hp.tau * gi.signum();
            let got = params.get("w").unwrap().data()[i];
            assert!(
                (got - expect).abs() < 1e-6 * hp.tau.max(1.0),
                "entry {i}: {got} vs {expect}"
            );
        }
        assert_eq!(state.t, 1);
    }

    #[test]
    fn adam_zero_grads_never_move() {
        let mut params = single("w", Tensor::vector(&[1.0, 2.0]));
        let before = params.clone();
        let grads = params.zeros_like();
        let mut state = OptimizerState::new(&params);
        for _ in 0..50 {
            adam_step(&mut state, &mut params, &grads, &AdamParams::default()).unwrap();
        }
        assert_eq!(params, before);
        assert_eq!(state.t, 50);
    }

    #[test]
    fn adam_elementwise_permutation_independence() {
        let values = [0.4, -0.9, 1.7, 0.02, -3.0];
        let grads_v = [1.0, 0.5, -0.25, 2.0, -1.0];
        let perm = [3usize, 0, 4, 1, 2];

        let run = |vals: &[f64], gs: &[f64]| -> Vec<f64> {
            let mut params = single("w", Tensor::vector(vals));
            let grads = single("w", Tensor::vector(gs));
            let mut state = OptimizerState::new(&params);
            for _ in 0..5 {
                adam_step(&mut state, &mut params, &grads, &AdamParams::default()).unwrap();
            }
            params.get("w").unwrap().data().to_vec()
        };

        let plain = run(&values, &grads_v);
        let permuted_vals: Vec<f64> = perm.iter().map(|&i| values[i]).collect();
        let permuted_grads: Vec<f64> = perm.iter().map(|&i| grads_v[i]).collect();
        let permuted = run(&permuted_vals, &permuted_grads);
        for (slot, &src) in perm.iter().enumerate() {
            assert_eq!(plain[src].to_bits(), permuted[slot].to_bits());
        }
    }

    #[test]
    fn clip_examples() {
        let small = Tensor::vector(&[0.1, 0.2]);
        assert_eq!(clip_gradient(&small, 1.0), small);

        let g = Tensor::vector(&[3.0, 4.0]);
        let clipped = clip_gradient(&g, 1.0);
        assert!((clipped.data()[0] - 0.6).abs() < 1e-12);
        assert!((clipped.data()[1] - 0.8).abs() < 1e-12);
        assert!((clipped.norm_l2() - 1.0).abs() < 1e-12);

        let zero = Tensor::zeros(vec![3]);
        assert_eq!(clip_gradient(&zero, 1.0), zero);
    }

    #[test]
    fn clip_norm_is_min_of_norm_and_threshold() {
        let mut rng = Rng::new(8);
        for _ in 0..50 {
            let g = Tensor::vector(&[
                rng.uniform(-3.0, 3.0),
                rng.uniform(-3.0, 3.0),
                rng.uniform(-3.0, 3.0),
            ]);
            let c = rng.uniform(0.1, 4.0);
            let clipped = clip_gradient(&g, c);
            let expect = g.norm_l2().min(c);
            assert!((clipped.norm_l2() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_check_flags_corrupted_gradient() {
        // loss = w^2/2 has gradient w; feeding 2w must report error ~ 1/3.
        let params = single("w", Tensor::scalar(1.5));
        let corrupted = single("w", Tensor::scalar(3.0));
        let report = gradient_check(
            |p| Ok(p.require("w")?.data()[0].powi(2) / 2.0),
            &params,
            &corrupted,
            1e-6,
        )
        .unwrap();
        assert!((report.max_rel_err - 1.0 / 3.0).abs() < 1e-3);
        assert_eq!(report.worst_entry, "w");
    }

    #[test]
    fn gradient_check_quadratic_is_tight() {
        let params = single("w", Tensor::vector(&[0.7, -0.4, 1.1]));
        let analytic = single("w", Tensor::vector(&[0.7, -0.4, 1.1]));
        let report = gradient_check(
            |p| Ok(p.require("w")?.sum_squares() / 2.0),
            &params,
            &analytic,
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-8, "{}", report.max_rel_err);
        assert_eq!(report.entries, 3);
    }

    #[test]
    fn gradient_check_rejects_non_finite_loss() {
        let params = single("w", Tensor::scalar(1.0));
        let analytic = single("w", Tensor::scalar(1.0));
        let result = gradient_check(|_| Ok(f64::NAN), &params, &analytic, 1e-6);
        assert!(matches!(result, Err(Error::NonFinite(_))));
    }

    #[test]
    fn frozen_tensors_stay_bit_identical() {
        let mut params = ParamSet::new();
        params.insert("a", Tensor::vector(&[1.0, 2.0])).unwrap();
        params.insert("b", Tensor::vector(&[3.0, 4.0])).unwrap();
        let mut grads = params.zeros_like();
        grads.get_mut("a").unwrap().data_mut()[0] = 1.0;
        grads.get_mut("b").unwrap().data_mut()[0] = 1.0;
        let frozen: BTreeSet<String> = ["b".to_string()].into();

        let mut gd = params.clone();
        gd_step_frozen(&mut gd, &grads, 0.1, &frozen).unwrap();
        assert_eq!(gd.get("b").unwrap(), params.get("b").unwrap());
        assert!(gd.get("a").unwrap() != params.get("a").unwrap());

        let mut adam = params.clone();
        let mut state = OptimizerState::new(&adam);
        adam_step_frozen(&mut state, &mut adam, &grads, &AdamParams::default(), &frozen).unwrap();
        assert_eq!(adam.get("b").unwrap(), params.get("b").unwrap());
        assert!(adam.get("a").unwrap() != params.get("a").unwrap());
    }
}
