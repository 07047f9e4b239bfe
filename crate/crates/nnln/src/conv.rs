//! Convolutional pipeline layers: multi-filter convolution with
//! per-channel bias, detector (activation) stages, max/average pooling,
//! batch normalization, local response normalization, dropout, flatten
//! and receptive-field arithmetic.
//!
//! Spatial data lives in `[n1, n2]` matrices or `[n1, n2, depth]` tensors
//! with channel-last layout. Forward passes hand back the caches their
//! backward passes need; every backward here is validated against the
//! finite-difference checker in the tests.

use crate::dense::{activate, activate_prime, ActivationKind};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{cross_correlate, out_shape, pad_zero, ConvGeometry, Tensor};

/// A convolutional layer: `filters` kernels of extent `kernel x kernel x
/// depth` plus one bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerSpec {
    pub filters: usize,
    pub geom: ConvGeometry,
    pub depth: usize,
}

impl ConvLayerSpec {
    pub fn new(filters: usize, geom: ConvGeometry, depth: usize) -> Self {
        ConvLayerSpec {
            filters,
            geom,
            depth,
        }
    }

    /// `M * m^2 * depth` kernel entries plus `M` biases.
    pub fn param_count(&self) -> usize {
        self.filters * self.geom.kernel * self.geom.kernel * self.depth + self.filters
    }
}

fn channel(input: &Tensor, c: usize) -> Tensor {
    let (n1, n2) = (input.shape()[0], input.shape()[1]);
    let mut out = Tensor::zeros(vec![n1, n2]);
    for i in 0..n1 {
        for j in 0..n2 {
            out.set2(i, j, input.at3(i, j, c));
        }
    }
    out
}

/// Forward convolution: output channel `f` is the depthwise sum of 2-D
/// cross-correlations with filter `f`'s kernel slices, plus its bias.
/// Input `[n1, n2, depth]`, kernels `[m, m, depth]` each, output
/// `[n1', n2', filters]`.
pub fn conv_forward(
    spec: &ConvLayerSpec,
    kernels: &[Tensor],
    biases: &Tensor,
    input: &Tensor,
) -> Result<Tensor> {
    if input.rank() != 3 || input.shape()[2] != spec.depth {
        return Err(Error::InvalidShape {
            op: "conv_forward",
            shape: input.shape().to_vec(),
            reason: format!("expected depth {}", spec.depth),
        });
    }
    if kernels.len() != spec.filters || biases.len() != spec.filters {
        return Err(Error::InvalidArgument(format!(
            "expected {} kernels and biases, got {} and {}",
            spec.filters,
            kernels.len(),
            biases.len()
        )));
    }
    let m = spec.geom.kernel;
    for k in kernels {
        if k.shape() != [m, m, spec.depth] {
            return Err(Error::InvalidShape {
                op: "conv_forward",
                shape: k.shape().to_vec(),
                reason: format!("kernel must be [{m}, {m}, {}]", spec.depth),
            });
        }
    }
    let os = out_shape(input.shape()[0], input.shape()[1], spec.geom)?;
    let mut out = Tensor::zeros(vec![os.rows, os.cols, spec.filters]);
    for (f, kernel) in kernels.iter().enumerate() {
        let mut acc = Tensor::zeros(vec![os.rows, os.cols]);
        for c in 0..spec.depth {
            let plane = cross_correlate(&channel(input, c), &channel(kernel, c), spec.geom)?;
            acc = acc.add(&plane)?;
        }
        let bias = biases.data()[f];
        for i in 0..os.rows {
            for j in 0..os.cols {
                out.set3(i, j, f, acc.at2(i, j) + bias);
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv_forward`]: kernel grads, per-channel bias grads
/// (the channel sums of the upstream), and the input gradient.
pub fn conv_backward(
    spec: &ConvLayerSpec,
    kernels: &[Tensor],
    input: &Tensor,
    upstream: &Tensor,
) -> Result<(Vec<Tensor>, Tensor, Tensor)> {
    let os = out_shape(input.shape()[0], input.shape()[1], spec.geom)?;
    if upstream.shape() != [os.rows, os.cols, spec.filters] {
        return Err(Error::ShapeMismatch {
            op: "conv_backward",
            lhs: vec![os.rows, os.cols, spec.filters],
            rhs: upstream.shape().to_vec(),
        });
    }
    let m = spec.geom.kernel;
    let s = spec.geom.stride;
    let p = spec.geom.padding;
    let padded = pad_zero(input, p)?;
    let (pn1, pn2) = (padded.shape()[0], padded.shape()[1]);

    let mut kernel_grads =
        vec![Tensor::zeros(vec![m, m, spec.depth]); spec.filters];
    let mut bias_grads = Tensor::zeros(vec![spec.filters]);
    let mut padded_grad = Tensor::zeros(vec![pn1, pn2, spec.depth]);

    for f in 0..spec.filters {
        let kernel = &kernels[f];
        let kg = &mut kernel_grads[f];
        let mut bias_acc = 0.0;
        for i in 0..os.rows {
            for j in 0..os.cols {
                let g = upstream.at3(i, j, f);
                bias_acc += g;
                if g == 0.0 {
                    continue;
                }
                for a in 0..m {
                    for b in 0..m {
                        for c in 0..spec.depth {
                            let (r, t) = (i * s + a, j * s + b);
                            let kv = kg.at3(a, b, c);
                            kg.set3(a, b, c, kv + g * padded.at3(r, t, c));
                            let pv = padded_grad.at3(r, t, c);
                            padded_grad.set3(r, t, c, pv + g * kernel.at3(a, b, c));
                        }
                    }
                }
            }
        }
        bias_grads.data_mut()[f] = bias_acc;
    }

    // crop the padding border off the input gradient
    let (n1, n2) = (input.shape()[0], input.shape()[1]);
    let mut input_grad = Tensor::zeros(vec![n1, n2, spec.depth]);
    for i in 0..n1 {
        for j in 0..n2 {
            for c in 0..spec.depth {
                input_grad.set3(i, j, c, padded_grad.at3(i + p, j + p, c));
            }
        }
    }
    Ok((kernel_grads, bias_grads, input_grad))
}

/// Detector layer: the componentwise activation stage.
pub fn detector(kind: ActivationKind, t: &Tensor) -> Tensor {
    activate(kind, t)
}

/// Backward of [`detector`]: `upstream (.) sigma'(z)`.
pub fn detector_backward(kind: ActivationKind, z: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    upstream.hadamard(&activate_prime(kind, z)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Avg,
}

/// Pooling layer description; carries no learnable parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub kind: PoolKind,
    pub geom: ConvGeometry,
}

impl PoolSpec {
    pub fn new(kind: PoolKind, kernel: usize, stride: usize) -> Self {
        PoolSpec {
            kind,
            geom: ConvGeometry::new(kernel, stride, 0),
        }
    }

    pub fn with_padding(mut self, p: usize) -> Self {
        self.geom.padding = p;
        self
    }
}

/// Winner positions for max pooling: per output element, the flat
/// `(row, col)` in the *padded* input that held the maximum. Ties go to
/// the first position in row-major window order.
#[derive(Debug, Clone)]
pub struct PoolCache {
    pub argmax: Option<Vec<(usize, usize, usize)>>,
}

fn pool_plane(
    spec: &PoolSpec,
    plane: &Tensor,
    ch: usize,
    winners: &mut Vec<(usize, usize, usize)>,
) -> Result<Tensor> {
    let os = out_shape(plane.shape()[0], plane.shape()[1], spec.geom)?;
    let padded = pad_zero(plane, spec.geom.padding)?;
    let m = spec.geom.kernel;
    let s = spec.geom.stride;
    let mut out = Tensor::zeros(vec![os.rows, os.cols]);
    for i in 0..os.rows {
        for j in 0..os.cols {
            match spec.kind {
                PoolKind::Max => {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_pos = (0, 0);
                    for a in 0..m {
                        for b in 0..m {
                            let v = padded.at2(i * s + a, j * s + b);
                            if v > best {
                                best = v;
                                best_pos = (i * s + a, j * s + b);
                            }
                        }
                    }
                    out.set2(i, j, best);
                    winners.push((best_pos.0, best_pos.1, ch));
                }
                PoolKind::Avg => {
                    let mut acc = 0.0;
                    for a in 0..m {
                        for b in 0..m {
                            acc += padded.at2(i * s + a, j * s + b);
                        }
                    }
                    out.set2(i, j, acc / (m * m) as f64);
                }
            }
        }
    }
    Ok(out)
}

/// Windowed max/mean per channel. Accepts `[n1, n2]` or `[n1, n2, depth]`.
pub fn pool_forward(spec: &PoolSpec, input: &Tensor) -> Result<(PoolCache, Tensor)> {
    match input.rank() {
        2 => {
            let mut winners = Vec::new();
            let out = pool_plane(spec, input, 0, &mut winners)?;
            let cache = PoolCache {
                argmax: (spec.kind == PoolKind::Max).then_some(winners),
            };
            Ok((cache, out))
        }
        3 => {
            let depth = input.shape()[2];
            let mut winners = Vec::new();
            let mut planes = Vec::with_capacity(depth);
            for c in 0..depth {
                planes.push(pool_plane(spec, &channel(input, c), c, &mut winners)?);
            }
            let (r, cdim) = (planes[0].shape()[0], planes[0].shape()[1]);
            let mut out = Tensor::zeros(vec![r, cdim, depth]);
            for (c, plane) in planes.iter().enumerate() {
                for i in 0..r {
                    for j in 0..cdim {
                        out.set3(i, j, c, plane.at2(i, j));
                    }
                }
            }
            let cache = PoolCache {
                argmax: (spec.kind == PoolKind::Max).then_some(winners),
            };
            Ok((cache, out))
        }
        _ => Err(Error::InvalidShape {
            op: "pool_forward",
            shape: input.shape().to_vec(),
            reason: "expects rank 2 or 3".into(),
        }),
    }
}

/// Backward pooling: max routes each upstream entry to its cached winner;
/// avg spreads `upstream / m^2` over the window. Contributions that fall
/// on the zero-padding border are dropped.
pub fn pool_backward(
    spec: &PoolSpec,
    cache: &PoolCache,
    input_shape: &[usize],
    upstream: &Tensor,
) -> Result<Tensor> {
    let p = spec.geom.padding;
    let (n1, n2) = (input_shape[0], input_shape[1]);
    let depth = if input_shape.len() == 3 {
        input_shape[2]
    } else {
        1
    };
    let mut grad3 = Tensor::zeros(vec![n1, n2, depth]);
    let up3 = if upstream.rank() == 2 {
        upstream.reshape(vec![upstream.shape()[0], upstream.shape()[1], 1])?
    } else {
        upstream.clone()
    };
    let (or, oc, od) = (up3.shape()[0], up3.shape()[1], up3.shape()[2]);
    if od != depth {
        return Err(Error::ShapeMismatch {
            op: "pool_backward",
            lhs: input_shape.to_vec(),
            rhs: upstream.shape().to_vec(),
        });
    }

    match spec.kind {
        PoolKind::Max => {
            let winners = cache
                .argmax
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("missing max-pool cache".into()))?;
            if winners.len() != or * oc * od {
                return Err(Error::InvalidArgument(
                    "max-pool cache does not match upstream shape".into(),
                ));
            }
            // winners were pushed channel-major: all outputs of channel 0 first
            let mut idx = 0;
            for c in 0..od {
                for i in 0..or {
                    for j in 0..oc {
                        let (wi, wj, wc) = winners[idx];
                        idx += 1;
                        debug_assert_eq!(wc, c);
                        if wi >= p && wj >= p && wi - p < n1 && wj - p < n2 {
                            let v = grad3.at3(wi - p, wj - p, c);
                            grad3.set3(wi - p, wj - p, c, v + up3.at3(i, j, c));
                        }
                    }
                }
            }
        }
        PoolKind::Avg => {
            let m = spec.geom.kernel;
            let s = spec.geom.stride;
            let share = 1.0 / (m * m) as f64;
            for c in 0..od {
                for i in 0..or {
                    for j in 0..oc {
                        let g = up3.at3(i, j, c) * share;
                        for a in 0..m {
                            for b in 0..m {
                                let (r, t) = (i * s + a, j * s + b);
                                if r >= p && t >= p && r - p < n1 && t - p < n2 {
                                    let v = grad3.at3(r - p, t - p, c);
                                    grad3.set3(r - p, t - p, c, v + g);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if input_shape.len() == 2 {
        grad3.reshape(vec![n1, n2])
    } else {
        Ok(grad3)
    }
}

pub const DEFAULT_BN_EPSILON: f64 = 1e-5;

/// Batch normalization layer: normalize the feature vectors over the
/// batch, then apply a learnable affine map `W y_hat + b`.
///
/// The normalization uses one scalar batch variance
/// `(1/b) sum_j ||y_j - mu||^2` by default; `per_component` switches to
/// the conventional per-feature variance.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormSpec {
    pub n_in: usize,
    pub n_out: usize,
    pub epsilon: f64,
    pub per_component: bool,
}

impl BatchNormSpec {
    pub fn new(n_in: usize, n_out: usize) -> Self {
        BatchNormSpec {
            n_in,
            n_out,
            epsilon: DEFAULT_BN_EPSILON,
            per_component: false,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn per_component(mut self) -> Self {
        self.per_component = true;
        self
    }

    /// `n_out * n_in` affine weights plus `n_out` biases.
    pub fn param_count(&self) -> usize {
        self.n_out * self.n_in + self.n_out
    }
}

/// Values cached by a batch-norm forward pass; valid only for the batch
/// that produced them.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub mu: Tensor,
    /// Scalar variance, or per-feature variances in per-component mode.
    pub var: Tensor,
    pub y_hat: Tensor,
    pub input: Tensor,
}

/// Normalizes the batch columns and applies the affine map.
/// `batch` is `[n_in, b]`; returns the cache and the `[n_out, b]` output.
pub fn batchnorm_forward(
    spec: &BatchNormSpec,
    w: &Tensor,
    b: &Tensor,
    batch: &Tensor,
) -> Result<(BatchNormCache, Tensor)> {
    if batch.rank() != 2 || batch.shape()[0] != spec.n_in {
        return Err(Error::InvalidShape {
            op: "batchnorm_forward",
            shape: batch.shape().to_vec(),
            reason: format!("expected [{}, b]", spec.n_in),
        });
    }
    let (n, cols) = (spec.n_in, batch.shape()[1]);
    let bf = cols as f64;

    let mut mu = Tensor::zeros(vec![n]);
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..cols {
            acc += batch.at2(i, j);
        }
        mu.data_mut()[i] = acc / bf;
    }

    let var = if spec.per_component {
        let mut v = Tensor::zeros(vec![n]);
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..cols {
                let d = batch.at2(i, j) - mu.data()[i];
                acc += d * d;
            }
            v.data_mut()[i] = acc / bf;
        }
        v
    } else {
        let mut acc = 0.0;
        for j in 0..cols {
            for i in 0..n {
                let d = batch.at2(i, j) - mu.data()[i];
                acc += d * d;
            }
        }
        Tensor::scalar(acc / bf)
    };

    let mut y_hat = Tensor::zeros(vec![n, cols]);
    for i in 0..n {
        let inv = if spec.per_component {
            1.0 / (var.data()[i] + spec.epsilon).sqrt()
        } else {
            1.0 / (var.data()[0] + spec.epsilon).sqrt()
        };
        for j in 0..cols {
            y_hat.set2(i, j, (batch.at2(i, j) - mu.data()[i]) * inv);
        }
    }

    let out = crate::dense::affine_forward(w, b, &y_hat)?;
    let cache = BatchNormCache {
        mu,
        var,
        y_hat,
        input: batch.clone(),
    };
    Ok((cache, out))
}

/// Gradients of [`batchnorm_forward`]: affine weight/bias grads plus the
/// gradient through the batch statistics back to the input.
pub fn batchnorm_backward(
    spec: &BatchNormSpec,
    w: &Tensor,
    cache: &BatchNormCache,
    upstream: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, cols) = (spec.n_in, cache.input.shape()[1]);
    let bf = cols as f64;
    if upstream.shape() != [spec.n_out, cols] {
        return Err(Error::ShapeMismatch {
            op: "batchnorm_backward",
            lhs: vec![spec.n_out, cols],
            rhs: upstream.shape().to_vec(),
        });
    }

    let w_grad = crate::dense::matmul_a_bt(upstream, &cache.y_hat)?;
    let b_grad = crate::dense::row_sums(upstream);
    let y_hat_bar = crate::dense::matmul_at_b(w, upstream)?;

    let mut input_grad = Tensor::zeros(vec![n, cols]);
    if spec.per_component {
        for i in 0..n {
            let inv = 1.0 / (cache.var.data()[i] + spec.epsilon).sqrt();
            // s = sum_j y_hat_bar[i,j] * d[i,j]
            let mut s = 0.0;
            let mut mean_dbar = 0.0;
            let mut d_bar = vec![0.0; cols];
            for j in 0..cols {
                let d = cache.input.at2(i, j) - cache.mu.data()[i];
                s += y_hat_bar.at2(i, j) * d;
            }
            for j in 0..cols {
                let d = cache.input.at2(i, j) - cache.mu.data()[i];
                d_bar[j] = inv * y_hat_bar.at2(i, j) - inv.powi(3) / bf * s * d;
                mean_dbar += d_bar[j];
            }
            mean_dbar /= bf;
            for j in 0..cols {
                input_grad.set2(i, j, d_bar[j] - mean_dbar);
            }
        }
    } else {
        let inv = 1.0 / (cache.var.data()[0] + spec.epsilon).sqrt();
        // s = sum over the whole batch of <y_hat_bar_j, d_j>
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..cols {
                let d = cache.input.at2(i, j) - cache.mu.data()[i];
                s += y_hat_bar.at2(i, j) * d;
            }
        }
        let mut d_bar = Tensor::zeros(vec![n, cols]);
        for i in 0..n {
            for j in 0..cols {
                let d = cache.input.at2(i, j) - cache.mu.data()[i];
                d_bar.set2(i, j, inv * y_hat_bar.at2(i, j) - inv.powi(3) / bf * s * d);
            }
        }
        // d_j = y_j - mu couples every sample through the mean
        for i in 0..n {
            let mut mean_row = 0.0;
            for j in 0..cols {
                mean_row += d_bar.at2(i, j);
            }
            mean_row /= bf;
            for j in 0..cols {
                input_grad.set2(i, j, d_bar.at2(i, j) - mean_row);
            }
        }
    }
    Ok((w_grad, b_grad, input_grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrnMode {
    InterChannel,
    IntraChannel,
}

/// Local response normalization hyperparameters (no learnable variables).
#[derive(Debug, Clone, PartialEq)]
pub struct LrnSpec {
    pub kappa: f64,
    pub gamma: f64,
    pub beta: f64,
    /// Neighborhood size; the window spans `floor(n/2)` on each side.
    pub window: usize,
    pub mode: LrnMode,
}

impl LrnSpec {
    /// Standard constants: kappa = 2, gamma = 1e-4, beta = 0.75.
    pub fn new(mode: LrnMode) -> Self {
        LrnSpec {
            kappa: 2.0,
            gamma: 1e-4,
            beta: 0.75,
            window: 2,
            mode,
        }
    }
}

fn lrn_denominator(spec: &LrnSpec, sum_sq: f64) -> f64 {
    (spec.kappa + spec.gamma * sum_sq).powf(spec.beta)
}

/// `Y_hat = Y / (kappa + gamma * sum of squared neighbors)^beta`, with the
/// neighbor window clamped at the tensor bounds.
pub fn lrn(spec: &LrnSpec, input: &Tensor) -> Result<Tensor> {
    if input.rank() != 3 {
        return Err(Error::InvalidShape {
            op: "lrn",
            shape: input.shape().to_vec(),
            reason: "expects [n1, n2, channels]".into(),
        });
    }
    let (n1, n2, m) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let h = spec.window / 2;
    let mut out = Tensor::zeros(vec![n1, n2, m]);
    for i in 0..n1 {
        for j in 0..n2 {
            for k in 0..m {
                let sum_sq = match spec.mode {
                    LrnMode::InterChannel => {
                        let lo = k.saturating_sub(h);
                        let hi = (k + h).min(m - 1);
                        (lo..=hi).map(|c| input.at3(i, j, c).powi(2)).sum::<f64>()
                    }
                    LrnMode::IntraChannel => {
                        let ilo = i.saturating_sub(h);
                        let ihi = (i + h).min(n1 - 1);
                        let jlo = j.saturating_sub(h);
                        let jhi = (j + h).min(n2 - 1);
                        let mut acc = 0.0;
                        for p in ilo..=ihi {
                            for q in jlo..=jhi {
                                acc += input.at3(p, q, k).powi(2);
                            }
                        }
                        acc
                    }
                };
                out.set3(i, j, k, input.at3(i, j, k) / lrn_denominator(spec, sum_sq));
            }
        }
    }
    Ok(out)
}

/// Input gradient of [`lrn`]. The window relation is symmetric, so entry
/// `x` receives the direct term plus the cross terms of every neighbor
/// whose window contains `x`.
pub fn lrn_backward(spec: &LrnSpec, input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    if upstream.shape() != input.shape() {
        return Err(Error::ShapeMismatch {
            op: "lrn_backward",
            lhs: input.shape().to_vec(),
            rhs: upstream.shape().to_vec(),
        });
    }
    let (n1, n2, m) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let h = spec.window / 2;
    // Precompute w = kappa + gamma * window sum for every entry.
    let mut w = Tensor::zeros(vec![n1, n2, m]);
    for i in 0..n1 {
        for j in 0..n2 {
            for k in 0..m {
                let sum_sq = match spec.mode {
                    LrnMode::InterChannel => {
                        let lo = k.saturating_sub(h);
                        let hi = (k + h).min(m - 1);
                        (lo..=hi).map(|c| input.at3(i, j, c).powi(2)).sum::<f64>()
                    }
                    LrnMode::IntraChannel => {
                        let ilo = i.saturating_sub(h);
                        let ihi = (i + h).min(n1 - 1);
                        let jlo = j.saturating_sub(h);
                        let jhi = (j + h).min(n2 - 1);
                        let mut acc = 0.0;
                        for p in ilo..=ihi {
                            for q in jlo..=jhi {
                                acc += input.at3(p, q, k).powi(2);
                            }
                        }
                        acc
                    }
                };
                w.set3(i, j, k, spec.kappa + spec.gamma * sum_sq);
            }
        }
    }
    let mut grad = Tensor::zeros(vec![n1, n2, m]);
    for i in 0..n1 {
        for j in 0..n2 {
            for k in 0..m {
                let wx = w.at3(i, j, k);
                let mut acc = upstream.at3(i, j, k) * wx.powf(-spec.beta);
                // cross terms: d/dx [ y_n / w_n^beta ] for neighbors n of x
                let mut cross = 0.0;
                match spec.mode {
                    LrnMode::InterChannel => {
                        let lo = k.saturating_sub(h);
                        let hi = (k + h).min(m - 1);
                        for c in lo..=hi {
                            let wn = w.at3(i, j, c);
                            cross += upstream.at3(i, j, c)
                                * input.at3(i, j, c)
                                * wn.powf(-spec.beta - 1.0);
                        }
                    }
                    LrnMode::IntraChannel => {
                        let ilo = i.saturating_sub(h);
                        let ihi = (i + h).min(n1 - 1);
                        let jlo = j.saturating_sub(h);
                        let jhi = (j + h).min(n2 - 1);
                        for p in ilo..=ihi {
                            for q in jlo..=jhi {
                                let wn = w.at3(p, q, k);
                                cross += upstream.at3(p, q, k)
                                    * input.at3(p, q, k)
                                    * wn.powf(-spec.beta - 1.0);
                            }
                        }
                    }
                }
                acc -= 2.0 * spec.beta * spec.gamma * input.at3(i, j, k) * cross;
                grad.set3(i, j, k, acc);
            }
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Eval,
}

/// Inverted dropout: at train time each entry survives with probability
/// `1 - p` and survivors are scaled by `1/(1 - p)`, so evaluation is the
/// identity. Returns the output and the mask (scale factors), which the
/// backward pass reuses.
pub fn dropout(
    p: f64,
    mode: DropoutMode,
    rng: &mut Rng,
    input: &Tensor,
) -> Result<(Tensor, Tensor)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "drop probability must be in [0, 1), got {p}"
        )));
    }
    match mode {
        DropoutMode::Eval => {
            let mask = Tensor::full(input.shape().to_vec(), 1.0);
            Ok((input.clone(), mask))
        }
        DropoutMode::Train => {
            let keep_scale = 1.0 / (1.0 - p);
            let mut mask = Tensor::zeros(input.shape().to_vec());
            for v in mask.data_mut() {
                *v = if rng.next_f64() >= p { keep_scale } else { 0.0 };
            }
            let out = input.hadamard(&mask)?;
            Ok((out, mask))
        }
    }
}

/// Backward dropout reapplies the saved mask.
pub fn dropout_backward(mask: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    upstream.hadamard(mask)
}

/// Row-major flattening to a vector.
pub fn flatten(t: &Tensor) -> Tensor {
    t.reshape(vec![t.len()]).expect("same count")
}

/// Inverse of [`flatten`].
pub fn unflatten(v: &Tensor, shape: &[usize]) -> Result<Tensor> {
    v.reshape(shape.to_vec())
}

/// Effective receptive field of one output neuron after the given stack:
/// `r <- r + (m - 1) * jump`, `jump <- jump * s`, starting from `r = 1`.
pub fn receptive_field(geoms: &[ConvGeometry]) -> usize {
    let mut r = 1usize;
    let mut jump = 1usize;
    for g in geoms {
        r += (g.kernel - 1) * jump;
        jump *= g.stride;
    }
    r
}
