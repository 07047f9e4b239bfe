//! Loss functions and their output gradients.
//!
//! Batch tensors follow the library convention: samples are trailing-index
//! columns of an `[n, N]` matrix. Rank-1 tensors count as a single sample.
//! Gradients come pre-scaled by `1/N` so they can be fed straight into
//! backpropagation.

use crate::error::{Error, Result};
use crate::params::{GradSet, ParamSet};
use crate::tensor::Tensor;

/// Clamp applied to probabilities before logarithms.
pub const PROB_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    Bce,
    SoftmaxNll,
}

impl LossKind {
    pub fn is_classification(self) -> bool {
        matches!(self, LossKind::Bce | LossKind::SoftmaxNll)
    }
}

/// Which parameters the decay penalty covers. `WeightsOnly` is the default;
/// `AllParams` is the literal `lambda * ||theta||^2` over everything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecayScope {
    #[default]
    WeightsOnly,
    AllParams,
}

fn is_weight_name(name: &str) -> bool {
    let last = name.rsplit('.').next().unwrap_or(name);
    last.starts_with('W') || last.starts_with('P')
}

fn sample_count(t: &Tensor) -> usize {
    if t.rank() == 2 {
        t.shape()[1]
    } else {
        1
    }
}

/// Mean squared error: `1/(2N) * sum_i ||y_i - s_i||^2`.
pub fn mse(y: &Tensor, s: &Tensor) -> Result<f64> {
    let diff = y.sub(s)?;
    Ok(diff.sum_squares() / (2.0 * sample_count(y) as f64))
}

/// Gradient of [`mse`] with respect to `y`: `(y - s) / N`.
pub fn mse_grad(y: &Tensor, s: &Tensor) -> Result<Tensor> {
    let diff = y.sub(s)?;
    Ok(diff.scale(1.0 / sample_count(y) as f64))
}

fn check_binary_labels(s: &Tensor) -> Result<()> {
    if s.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument(
            "bce labels must be exactly 0 or 1".into(),
        ));
    }
    Ok(())
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON)
}

/// Binary cross entropy, averaged per entry:
/// `mean(-s*log(y) - (1-s)*log(1-y))` with `y` clamped away from {0, 1}.
pub fn bce(y: &Tensor, s: &Tensor) -> Result<f64> {
    if y.shape() != s.shape() {
        return Err(Error::ShapeMismatch {
            op: "bce",
            lhs: y.shape().to_vec(),
            rhs: s.shape().to_vec(),
        });
    }
    check_binary_labels(s)?;
    let mut acc = 0.0;
    for (&p, &label) in y.data().iter().zip(s.data()) {
        let p = clamp_prob(p);
        acc += -label * p.ln() - (1.0 - label) * (1.0 - p).ln();
    }
    Ok(acc / y.len() as f64)
}

/// Gradient of [`bce`] with respect to `y`, pre-scaled by `1/N`.
pub fn bce_grad(y: &Tensor, s: &Tensor) -> Result<Tensor> {
    if y.shape() != s.shape() {
        return Err(Error::ShapeMismatch {
            op: "bce_grad",
            lhs: y.shape().to_vec(),
            rhs: s.shape().to_vec(),
        });
    }
    check_binary_labels(s)?;
    let n = y.len() as f64;
    let data: Vec<f64> = y
        .data()
        .iter()
        .zip(s.data())
        .map(|(&p, &label)| {
            let p = clamp_prob(p);
            (-label / p + (1.0 - label) / (1.0 - p)) / n
        })
        .collect();
    Tensor::new(y.shape().to_vec(), data)
}

/// Negative log-likelihood of the softmax of `logits` at `label`.
pub fn softmax_nll(logits: &Tensor, label: usize) -> Result<f64> {
    if logits.rank() != 1 {
        return Err(Error::InvalidShape {
            op: "softmax_nll",
            shape: logits.shape().to_vec(),
            reason: "expects a logit vector".into(),
        });
    }
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    // -log softmax(z)[label] = log(sum exp(z - max)) - (z[label] - max)
    let max = logits.max();
    let log_sum: f64 = logits
        .data()
        .iter()
        .map(|&z| (z - max).exp())
        .sum::<f64>()
        .ln();
    Ok(log_sum - (logits.data()[label] - max))
}

/// Fused gradient of [`softmax_nll`] with respect to the logits:
/// `softmax(logits) - one_hot(label)`.
pub fn softmax_nll_grad(logits: &Tensor, label: usize) -> Result<Tensor> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    let mut grad = crate::dense::softmax(logits);
    grad.data_mut()[label] -= 1.0;
    Ok(grad)
}

/// Batch NLL over softmax probabilities (columns are samples).
pub fn nll_from_probs(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    let n = sample_count(probs);
    if labels.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} samples",
            labels.len(),
            n
        )));
    }
    let classes = probs.shape()[0];
    let mut acc = 0.0;
    for (j, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let p = if probs.rank() == 2 {
            probs.at2(label, j)
        } else {
            probs.data()[label]
        };
        acc += -clamp_prob(p).ln();
    }
    Ok(acc / n as f64)
}

/// Fused logits gradient `(probs - one_hot) / N` computed from softmax
/// outputs. This is the tensor backpropagation consumes when the final
/// layer activation is softmax.
pub fn nll_fused_grad_from_probs(probs: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let n = sample_count(probs);
    if labels.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} samples",
            labels.len(),
            n
        )));
    }
    let classes = probs.shape()[0];
    let mut grad = probs.scale(1.0 / n as f64);
    for (j, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        if grad.rank() == 2 {
            let v = grad.at2(label, j);
            grad.set2(label, j, v - 1.0 / n as f64);
        } else {
            grad.data_mut()[label] -= 1.0 / n as f64;
        }
    }
    Ok(grad)
}

/// Weight-decay penalty `lambda * sum ||theta||^2` over the scoped tensors.
pub fn weight_decay_penalty(params: &ParamSet, lambda: f64, scope: DecayScope) -> f64 {
    let mut acc = 0.0;
    for (name, t) in params.iter() {
        if scope == DecayScope::AllParams || is_weight_name(name) {
            acc += t.sum_squares();
        }
    }
    lambda * acc
}

/// Adds the decay gradient `2 * lambda * theta` to the scoped entries.
pub fn add_weight_decay_grads(
    grads: &mut GradSet,
    params: &ParamSet,
    lambda: f64,
    scope: DecayScope,
) -> Result<()> {
    grads.check_mirrors(params)?;
    if lambda == 0.0 {
        return Ok(());
    }
    for (name, g) in grads.iter_mut() {
        if scope == DecayScope::AllParams || is_weight_name(name) {
            let theta = params.get(name).expect("mirror checked");
            g.add_scaled(theta, 2.0 * lambda)?;
        }
    }
    Ok(())
}
