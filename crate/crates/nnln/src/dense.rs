//! Feedforward layers: activation functions and derivatives, weight
//! initialization, the network architecture description, the cached
//! forward pass and layer-wise backpropagation.
//!
//! Batches are matrices whose trailing index is the sample: an `[n, N]`
//! tensor holds `N` feature columns of width `n`. Gradients accumulate
//! over the batch in ascending sample order.

use crate::error::{Error, Result};
use crate::params::{GradSet, ParamSet};
use crate::residual::{self, BlockCache, ResLayerCache, ResidualBlockSpec, ResidualLayerSpec};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    Heaviside,
    Sigmoid,
    Tanh,
    Relu,
    LeakyRelu(f64),
    Identity,
    /// Normalizes each sample column; only valid on the final layer. Its
    /// derivative is fused into the loss gradient rather than exposed as a
    /// Jacobian.
    Softmax,
}

impl ActivationKind {
    pub fn name(&self) -> String {
        match self {
            ActivationKind::Heaviside => "heaviside".into(),
            ActivationKind::Sigmoid => "sigmoid".into(),
            ActivationKind::Tanh => "tanh".into(),
            ActivationKind::Relu => "relu".into(),
            ActivationKind::LeakyRelu(a) => format!("leaky:{a}"),
            ActivationKind::Identity => "identity".into(),
            ActivationKind::Softmax => "softmax".into(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        if let Some(alpha) = text.strip_prefix("leaky:") {
            let alpha: f64 = alpha
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad leaky slope `{alpha}`")))?;
            if !(0.0 < alpha && alpha < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "leaky slope must be in (0, 1), got {alpha}"
                )));
            }
            return Ok(ActivationKind::LeakyRelu(alpha));
        }
        match text {
            "heaviside" => Ok(ActivationKind::Heaviside),
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "tanh" => Ok(ActivationKind::Tanh),
            "relu" => Ok(ActivationKind::Relu),
            "identity" => Ok(ActivationKind::Identity),
            "softmax" => Ok(ActivationKind::Softmax),
            other => Err(Error::InvalidArgument(format!(
                "unknown activation `{other}`"
            ))),
        }
    }

    #[inline]
    pub fn apply_scalar(&self, z: f64) -> f64 {
        match self {
            ActivationKind::Heaviside => {
                if z >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            ActivationKind::Tanh => z.tanh(),
            ActivationKind::Relu => z.max(0.0),
            ActivationKind::LeakyRelu(a) => {
                if z >= 0.0 {
                    z
                } else {
                    a * z
                }
            }
            ActivationKind::Identity => z,
            ActivationKind::Softmax => panic!("softmax is not componentwise"),
        }
    }

    /// Componentwise derivative. ReLU-family subgradient at 0 is 0.
    #[inline]
    pub fn prime_scalar(&self, z: f64) -> Result<f64> {
        Ok(match self {
            ActivationKind::Heaviside => return Err(Error::NonDifferentiable("heaviside")),
            ActivationKind::Softmax => {
                return Err(Error::NonDifferentiable(
                    "softmax (its derivative is fused into the loss gradient)",
                ))
            }
            ActivationKind::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
            ActivationKind::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            ActivationKind::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::LeakyRelu(a) => {
                if z > 0.0 {
                    1.0
                } else {
                    *a
                }
            }
            ActivationKind::Identity => 1.0,
        })
    }
}

/// Componentwise activation; softmax normalizes per sample column.
pub fn activate(kind: ActivationKind, z: &Tensor) -> Tensor {
    match kind {
        ActivationKind::Softmax => softmax_columns(z),
        _ => z.map(|v| kind.apply_scalar(v)),
    }
}

/// Componentwise derivative tensor; errors for heaviside and softmax.
pub fn activate_prime(kind: ActivationKind, z: &Tensor) -> Result<Tensor> {
    // Probe once so the non-differentiable kinds error out.
    kind.prime_scalar(0.0)?;
    Ok(z.map(|v| kind.prime_scalar(v).expect("differentiable kind")))
}

/// Numerically stable softmax of a vector: exponentials are taken after
/// subtracting the maximum, so constant shifts are bitwise neutral.
pub fn softmax(y: &Tensor) -> Tensor {
    debug_assert_eq!(y.rank(), 1);
    let max = y.max();
    let exps: Vec<f64> = y.data().iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Tensor::vector(&exps.iter().map(|e| e / sum).collect::<Vec<_>>())
}

/// Softmax applied to every column of a batch matrix (or to the vector
/// itself for rank 1).
pub fn softmax_columns(z: &Tensor) -> Tensor {
    if z.rank() == 1 {
        return softmax(z);
    }
    let cols = z.shape()[1];
    let columns: Vec<Tensor> = (0..cols).map(|j| softmax(&z.column(j))).collect();
    Tensor::from_columns(&columns).expect("uniform columns")
}

/// One fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayerSpec {
    pub n_in: usize,
    pub n_out: usize,
    pub activation: ActivationKind,
}

impl DenseLayerSpec {
    pub fn new(n_in: usize, n_out: usize, activation: ActivationKind) -> Self {
        DenseLayerSpec {
            n_in,
            n_out,
            activation,
        }
    }
}

/// A layer in a trainable chain.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense(DenseLayerSpec),
    Residual(ResidualLayerSpec),
    ResidualBlock(ResidualBlockSpec),
}

impl LayerSpec {
    pub fn n_in(&self) -> usize {
        match self {
            LayerSpec::Dense(d) => d.n_in,
            LayerSpec::Residual(r) => r.n_in,
            LayerSpec::ResidualBlock(b) => b.width,
        }
    }

    pub fn n_out(&self) -> usize {
        match self {
            LayerSpec::Dense(d) => d.n_out,
            LayerSpec::Residual(r) => r.n_out,
            LayerSpec::ResidualBlock(b) => b.width,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            LayerSpec::Dense(d) => d.n_in * d.n_out + d.n_out,
            LayerSpec::Residual(r) => r.param_count(),
            LayerSpec::ResidualBlock(b) => b.param_count(),
        }
    }
}

/// Ordered layer list describing the architecture.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = NetworkSpec { layers };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dense_chain(widths: &[usize], activation: ActivationKind) -> Result<Self> {
        let layers = widths
            .windows(2)
            .map(|w| LayerSpec::Dense(DenseLayerSpec::new(w[0], w[1], activation)))
            .collect();
        NetworkSpec::new(layers)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_width(&self) -> Option<usize> {
        self.layers.first().map(|l| l.n_in())
    }

    pub fn output_width(&self) -> Option<usize> {
        self.layers.last().map(|l| l.n_out())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for pair in self.layers.windows(2) {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(Error::InvalidArgument(format!(
                    "layer widths do not chain: {} -> {}",
                    pair[0].n_out(),
                    pair[1].n_in()
                )));
            }
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.n_in() == 0 || layer.n_out() == 0 {
                return Err(Error::InvalidArgument("layer widths must be >= 1".into()));
            }
            let softmax_here = matches!(
                layer,
                LayerSpec::Dense(DenseLayerSpec {
                    activation: ActivationKind::Softmax,
                    ..
                })
            ) || matches!(
                layer,
                LayerSpec::Residual(ResidualLayerSpec {
                    activation: ActivationKind::Softmax,
                    ..
                })
            );
            if softmax_here
                && !(i == self.layers.len() - 1 && matches!(layer, LayerSpec::Dense(_)))
            {
                return Err(Error::InvalidArgument(
                    "softmax is only allowed as the final dense layer activation".into(),
                ));
            }
            if let LayerSpec::Dense(DenseLayerSpec {
                activation: ActivationKind::LeakyRelu(a),
                ..
            }) = layer
            {
                if !(0.0 < *a && *a < 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "leaky slope must be in (0, 1), got {a}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Canonical text form; parses back to an equal spec.
    pub fn canonical(&self) -> String {
        self.layers
            .iter()
            .map(|layer| match layer {
                LayerSpec::Dense(d) => {
                    format!("dense {} {} {}", d.n_in, d.n_out, d.activation.name())
                }
                LayerSpec::Residual(r) => {
                    let mut s = format!("res {} {} {}", r.n_in, r.n_out, r.activation.name());
                    if r.tau != 1.0 {
                        s.push_str(&format!(" tau={}", r.tau));
                    }
                    if r.learn_tau {
                        s.push_str(" learn_tau");
                    }
                    s
                }
                LayerSpec::ResidualBlock(b) => {
                    let mut s = format!("resblock {} {}", b.width, b.variant.name());
                    if b.epsilon != residual::DEFAULT_BN_EPSILON {
                        s.push_str(&format!(" eps={}", b.epsilon));
                    }
                    s
                }
            })
            .collect::<Vec<_>>()
            .join("; ")
    }

    /// Parses the architecture mini-language, e.g.
    /// `dense 784 128 relu; dense 128 10 softmax`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut layers = Vec::new();
        for part in text.split(';') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = part.split_whitespace().collect();
            let parse_width = |tok: &str| -> Result<usize> {
                tok.parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("bad layer width `{tok}`")))
            };
            match tokens[0] {
                "dense" => {
                    if tokens.len() != 4 {
                        return Err(Error::InvalidArgument(format!(
                            "dense layer needs `dense IN OUT ACT`, got `{part}`"
                        )));
                    }
                    layers.push(LayerSpec::Dense(DenseLayerSpec::new(
                        parse_width(tokens[1])?,
                        parse_width(tokens[2])?,
                        ActivationKind::parse(tokens[3])?,
                    )));
                }
                "res" => {
                    if tokens.len() < 4 {
                        return Err(Error::InvalidArgument(format!(
                            "res layer needs `res IN OUT ACT [tau=V] [learn_tau]`, got `{part}`"
                        )));
                    }
                    let mut spec = ResidualLayerSpec::new(
                        parse_width(tokens[1])?,
                        parse_width(tokens[2])?,
                        ActivationKind::parse(tokens[3])?,
                    );
                    for extra in &tokens[4..] {
                        if let Some(v) = extra.strip_prefix("tau=") {
                            spec.tau = v.parse().map_err(|_| {
                                Error::InvalidArgument(format!("bad tau `{v}`"))
                            })?;
                        } else if *extra == "learn_tau" {
                            spec.learn_tau = true;
                        } else {
                            return Err(Error::InvalidArgument(format!(
                                "unknown res option `{extra}`"
                            )));
                        }
                    }
                    layers.push(LayerSpec::Residual(spec));
                }
                "resblock" => {
                    if tokens.len() < 3 {
                        return Err(Error::InvalidArgument(format!(
                            "resblock needs `resblock WIDTH VARIANT [eps=V]`, got `{part}`"
                        )));
                    }
                    let mut spec = ResidualBlockSpec::new(
                        parse_width(tokens[1])?,
                        residual::BlockVariant::parse(tokens[2])?,
                    );
                    for extra in &tokens[3..] {
                        if let Some(v) = extra.strip_prefix("eps=") {
                            spec.epsilon = v.parse().map_err(|_| {
                                Error::InvalidArgument(format!("bad eps `{v}`"))
                            })?;
                        } else {
                            return Err(Error::InvalidArgument(format!(
                                "unknown resblock option `{extra}`"
                            )));
                        }
                    }
                    layers.push(LayerSpec::ResidualBlock(spec));
                }
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown layer kind `{other}`"
                    )));
                }
            }
        }
        NetworkSpec::new(layers)
    }

    /// Fresh parameters for the whole chain. Weight matrices default to He
    /// initialization for ReLU-family activations and Xavier otherwise;
    /// biases start at zero.
    pub fn init_params(&self, rng: &mut Rng) -> Result<ParamSet> {
        let mut params = ParamSet::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            let prefix = format!("layer{idx}");
            match layer {
                LayerSpec::Dense(d) => {
                    let kind = default_weight_init(d.activation);
                    params.insert(
                        format!("{prefix}.W"),
                        init(kind, &[d.n_out, d.n_in], d.n_in, rng),
                    )?;
                    params.insert(format!("{prefix}.b"), Tensor::zeros(vec![d.n_out]))?;
                }
                LayerSpec::Residual(r) => {
                    residual::init_res_layer_params(r, &prefix, &mut params, rng)?;
                }
                LayerSpec::ResidualBlock(b) => {
                    residual::init_block_params(b, &prefix, &mut params, rng)?;
                }
            }
        }
        Ok(params)
    }
}

/// Per-layer cached values from a forward pass.
#[derive(Debug, Clone)]
pub enum LayerCache {
    Dense { z: Tensor, y: Tensor },
    Residual(ResLayerCache),
    Block(BlockCache),
}

impl LayerCache {
    pub fn output(&self) -> &Tensor {
        match self {
            LayerCache::Dense { y, .. } => y,
            LayerCache::Residual(c) => &c.output,
            LayerCache::Block(c) => &c.output,
        }
    }
}

/// Cached activations for a whole batch: the input plus `(z, y)` per layer.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Tensor,
    pub layers: Vec<LayerCache>,
}

impl ForwardCache {
    /// Final feature batch; the input itself for a depth-0 network.
    pub fn output(&self) -> &Tensor {
        self.layers.last().map(|l| l.output()).unwrap_or(&self.input)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}

/// Affine-then-activate for one dense layer over a batch:
/// `z = W y_prev + b` (bias broadcast over columns), `y = sigma(z)`.
pub fn dense_forward(
    spec: &DenseLayerSpec,
    w: &Tensor,
    b: &Tensor,
    y_prev: &Tensor,
) -> Result<(Tensor, Tensor)> {
    if y_prev.shape()[0] != spec.n_in {
        return Err(Error::ShapeMismatch {
            op: "dense_forward",
            lhs: vec![spec.n_in],
            rhs: y_prev.shape().to_vec(),
        });
    }
    let z = affine_forward(w, b, y_prev)?;
    let y = activate(spec.activation, &z);
    Ok((z, y))
}

/// `W x + b` with the bias broadcast over sample columns.
pub fn affine_forward(w: &Tensor, b: &Tensor, x: &Tensor) -> Result<Tensor> {
    let mut z = if x.rank() == 1 {
        w.matvec(x)?
    } else {
        w.matmul(x)?
    };
    let n_out = w.shape()[0];
    if b.len() != n_out {
        return Err(Error::ShapeMismatch {
            op: "affine_forward",
            lhs: w.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    if z.rank() == 1 {
        z = z.add(b)?;
    } else {
        let cols = z.shape()[1];
        for i in 0..n_out {
            let bi = b.data()[i];
            for j in 0..cols {
                let v = z.at2(i, j);
                z.set2(i, j, v + bi);
            }
        }
    }
    Ok(z)
}

/// Row-wise sum of a batch matrix (the bias-gradient reduction).
pub fn row_sums(t: &Tensor) -> Tensor {
    if t.rank() == 1 {
        return t.clone();
    }
    let (r, c) = (t.shape()[0], t.shape()[1]);
    let mut out = Tensor::zeros(vec![r]);
    for i in 0..r {
        let mut acc = 0.0;
        for j in 0..c {
            acc += t.at2(i, j);
        }
        out.data_mut()[i] = acc;
    }
    out
}

/// Runs the whole chain, caching `z` and `y` for every layer.
pub fn network_forward(
    spec: &NetworkSpec,
    params: &ParamSet,
    batch: &Tensor,
) -> Result<ForwardCache> {
    if let Some(n0) = spec.input_width() {
        if batch.shape()[0] != n0 {
            return Err(Error::ShapeMismatch {
                op: "network_forward",
                lhs: vec![n0],
                rhs: batch.shape().to_vec(),
            });
        }
    }
    let mut layers = Vec::with_capacity(spec.layers.len());
    let mut current = batch.clone();
    for (idx, layer) in spec.layers.iter().enumerate() {
        let prefix = format!("layer{idx}");
        let cache = match layer {
            LayerSpec::Dense(d) => {
                let w = params.require(&format!("{prefix}.W"))?;
                let b = params.require(&format!("{prefix}.b"))?;
                let (z, y) = dense_forward(d, w, b, &current)?;
                current = y.clone();
                LayerCache::Dense { z, y }
            }
            LayerSpec::Residual(r) => {
                let cache = residual::res_layer_forward(r, &prefix, params, &current)?;
                current = cache.output.clone();
                LayerCache::Residual(cache)
            }
            LayerSpec::ResidualBlock(b) => {
                let cache = residual::block_forward(b, &prefix, params, &current)?;
                current = cache.output.clone();
                LayerCache::Block(cache)
            }
        };
        layers.push(cache);
    }
    Ok(ForwardCache {
        input: batch.clone(),
        layers,
    })
}

/// Layer-wise backpropagation through the cached forward pass.
///
/// `loss_grad` is the loss gradient with respect to the network output,
/// already scaled by `1/N`. When the final layer activation is softmax the
/// softmax derivative is fused into the loss gradient, so `loss_grad` must
/// be the gradient with respect to the final pre-activation `z` (for NLL:
/// `(softmax(z) - onehot) / N`).
pub fn backprop(
    spec: &NetworkSpec,
    params: &ParamSet,
    cache: &ForwardCache,
    loss_grad: &Tensor,
) -> Result<GradSet> {
    Ok(backprop_with_input_grad(spec, params, cache, loss_grad)?.0)
}

/// [`backprop`] that also returns the gradient with respect to the input
/// batch.
pub fn backprop_with_input_grad(
    spec: &NetworkSpec,
    params: &ParamSet,
    cache: &ForwardCache,
    loss_grad: &Tensor,
) -> Result<(GradSet, Tensor)> {
    if cache.layers.len() != spec.layers.len() {
        return Err(Error::InvalidArgument(format!(
            "cache depth {} does not match network depth {}",
            cache.layers.len(),
            spec.layers.len()
        )));
    }
    if loss_grad.shape() != cache.output().shape() {
        return Err(Error::ShapeMismatch {
            op: "backprop",
            lhs: cache.output().shape().to_vec(),
            rhs: loss_grad.shape().to_vec(),
        });
    }
    let mut grads = params.zeros_like();
    let mut upstream = loss_grad.clone();
    let last = spec.layers.len().wrapping_sub(1);
    for (idx, (layer, layer_cache)) in spec
        .layers
        .iter()
        .zip(&cache.layers)
        .enumerate()
        .rev()
    {
        let prefix = format!("layer{idx}");
        let prev_output = if idx == 0 {
            &cache.input
        } else {
            cache.layers[idx - 1].output()
        };
        upstream = match (layer, layer_cache) {
            (LayerSpec::Dense(d), LayerCache::Dense { z, .. }) => {
                // z_bar = y_bar (.) sigma'(z); fused softmax arrives as
                // z_bar already.
                let z_bar = if d.activation == ActivationKind::Softmax && idx == last {
                    upstream
                } else {
                    upstream.hadamard(&activate_prime(d.activation, z)?)?
                };
                let w = params.require(&format!("{prefix}.W"))?;
                let w_grad = matmul_a_bt(&z_bar, prev_output)?;
                let b_grad = row_sums(&z_bar);
                *grads
                    .get_mut(&format!("{prefix}.W"))
                    .expect("grads mirror params") = w_grad;
                *grads
                    .get_mut(&format!("{prefix}.b"))
                    .expect("grads mirror params") = b_grad;
                matmul_at_b(w, &z_bar)?
            }
            (LayerSpec::Residual(r), LayerCache::Residual(c)) => {
                residual::res_layer_backward(r, &prefix, params, c, &upstream, &mut grads)?
            }
            (LayerSpec::ResidualBlock(b), LayerCache::Block(c)) => {
                residual::block_backward(b, &prefix, params, c, &upstream, &mut grads)?
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "cache kind does not match layer kind".into(),
                ))
            }
        };
    }
    Ok((grads, upstream))
}

/// `A * B^T` without materializing the transpose.
pub fn matmul_a_bt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (a, b) = (as_matrix(a), as_matrix(b));
    if a.shape()[1] != b.shape()[1] {
        return Err(Error::ShapeMismatch {
            op: "matmul_a_bt",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[0]);
    let mut out = Tensor::zeros(vec![m, n]);
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for t in 0..k {
                acc += a.at2(i, t) * b.at2(j, t);
            }
            out.set2(i, j, acc);
        }
    }
    Ok(out)
}

/// `A^T * B` without materializing the transpose.
pub fn matmul_at_b(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let b_mat = as_matrix(b);
    if a.shape()[0] != b_mat.shape()[0] {
        return Err(Error::ShapeMismatch {
            op: "matmul_at_b",
            lhs: a.shape().to_vec(),
            rhs: b_mat.shape().to_vec(),
        });
    }
    let (k, m, n) = (a.shape()[0], a.shape()[1], b_mat.shape()[1]);
    let mut out = Tensor::zeros(vec![m, n]);
    for t in 0..k {
        for i in 0..m {
            let a_ti = a.at2(t, i);
            for j in 0..n {
                let v = out.at2(i, j);
                out.set2(i, j, v + a_ti * b_mat.at2(t, j));
            }
        }
    }
    if b.rank() == 1 {
        out.reshape(vec![m])
    } else {
        Ok(out)
    }
}

fn as_matrix(t: &Tensor) -> Tensor {
    if t.rank() == 1 {
        t.reshape(vec![t.len(), 1]).expect("same count")
    } else {
        t.clone()
    }
}

/// Weight initialization schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitKind {
    Zero,
    Gaussian(f64),
    Xavier,
    He,
}

fn default_weight_init(activation: ActivationKind) -> InitKind {
    match activation {
        ActivationKind::Relu | ActivationKind::LeakyRelu(_) => InitKind::He,
        _ => InitKind::Xavier,
    }
}

/// Draws a tensor of the given shape. Xavier uses std `1/sqrt(n_in)`, He
/// uses `sqrt(2/n_in)`; both need `n_in >= 1`.
pub fn init(kind: InitKind, shape: &[usize], n_in: usize, rng: &mut Rng) -> Tensor {
    let std = match kind {
        InitKind::Zero => return Tensor::zeros(shape.to_vec()),
        InitKind::Gaussian(std) => std,
        InitKind::Xavier => {
            assert!(n_in >= 1);
            1.0 / (n_in as f64).sqrt()
        }
        InitKind::He => {
            assert!(n_in >= 1);
            (2.0 / n_in as f64).sqrt()
        }
    };
    let mut t = Tensor::zeros(shape.to_vec());
    for v in t.data_mut() {
        *v = rng.gaussian_scaled(std);
    }
    t
}

/// Constant initialization of a multi-row weight matrix makes its rows
/// evolve identically under gradient descent; returns a warning describing
/// that when it applies.
pub fn symmetry_warning(kind: InitKind, shape: &[usize]) -> Option<String> {
    let constant = matches!(kind, InitKind::Zero) || matches!(kind, InitKind::Gaussian(s) if s == 0.0);
    if constant && shape.len() >= 2 && shape.iter().product::<usize>() > 1 {
        Some(format!(
            "constant initialization of weight tensor {shape:?} prevents symmetry breaking"
        ))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses;
    use crate::optim::gradient_check;

    #[test]
    fn activation_values() {
        assert_eq!(ActivationKind::Sigmoid.apply_scalar(0.0), 0.5);
        assert_eq!(ActivationKind::Heaviside.apply_scalar(-1.0), 0.0);
        assert_eq!(ActivationKind::Heaviside.apply_scalar(0.0), 1.0);
        let leaky = ActivationKind::LeakyRelu(0.1);
        assert!((leaky.apply_scalar(-2.0) + 0.2).abs() < 1e-15);
        assert_eq!(leaky.apply_scalar(3.0), 3.0);
        assert_eq!(ActivationKind::Relu.apply_scalar(-4.0), 0.0);
        assert!(ActivationKind::Tanh.apply_scalar(5.0) < 1.0);
    }

    #[test]
    fn activation_ranges() {
        for z in [-5.0, -0.5, 0.0, 0.5, 5.0] {
            let s = ActivationKind::Sigmoid.apply_scalar(z);
            assert!(s > 0.0 && s < 1.0);
            let t = ActivationKind::Tanh.apply_scalar(z);
            assert!(t > -1.0 && t < 1.0);
            assert!(ActivationKind::Relu.apply_scalar(z) >= 0.0);
        }
    }

    #[test]
    fn derivative_values() {
        assert_eq!(ActivationKind::Relu.prime_scalar(3.0).unwrap(), 1.0);
        // sigma'(0) = sigma(0)(1 - sigma(0)) = 0.25
        assert_eq!(ActivationKind::Sigmoid.prime_scalar(0.0).unwrap(), 0.25);
        // tanh'(0) = 1 - tanh(0)^2 = 1
        assert_eq!(ActivationKind::Tanh.prime_scalar(0.0).unwrap(), 1.0);
        // documented subgradient choice at the kink
        assert_eq!(ActivationKind::Relu.prime_scalar(0.0).unwrap(), 0.0);
        assert!(ActivationKind::Heaviside.prime_scalar(1.0).is_err());
        assert!(activate_prime(ActivationKind::Heaviside, &Tensor::scalar(1.0)).is_err());
    }

    #[test]
    fn softmax_basics() {
        let two = softmax(&Tensor::vector(&[0.0, 0.0]));
        assert_eq!(two.data(), &[0.5, 0.5]);

        let probs = softmax(&Tensor::vector(&[1.0, 2.0, 3.0]));
        let expect = [0.09003057317038046, 0.24472847105479764, 0.6652409557748218];
        for (p, e) in probs.data().iter().zip(&expect) {
            assert!((p - e).abs() < 1e-5);
        }
        assert!((probs.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariance_is_bitwise() {
        // Dyadic entries and shift keep the additions exact, so after max
        // subtraction the two computations are identical to the bit.
        let y = Tensor::vector(&[0.25, -1.5, 4.0, 2.25]);
        let shifted = y.map(|v| v + 123.5);
        let a = softmax(&y);
        let b = softmax(&shifted);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        // general shifts agree to rounding error
        let c = softmax(&y.map(|v| v + 0.123456789));
        for (x, y) in a.data().iter().zip(c.data()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn dense_forward_identity_passthrough() {
        let spec = DenseLayerSpec::new(3, 3, ActivationKind::Identity);
        let w = Tensor::identity(3);
        let b = Tensor::zeros(vec![3]);
        let batch = Tensor::matrix(&[&[1.0, 4.0], &[2.0, 5.0], &[3.0, 6.0]]);
        let (_, y) = dense_forward(&spec, &w, &b, &batch).unwrap();
        assert_eq!(y, batch);
    }

    #[test]
    fn dense_forward_zero_input_bias_relu() {
        let spec = DenseLayerSpec::new(2, 2, ActivationKind::Relu);
        let w = Tensor::zeros(vec![2, 2]);
        let b = Tensor::vector(&[1.0, -1.0]);
        let (_, y) = dense_forward(&spec, &w, &b, &Tensor::vector(&[0.0, 0.0])).unwrap();
        assert_eq!(y, Tensor::vector(&[1.0, 0.0]));
    }

    fn xor_spec_and_params() -> (NetworkSpec, ParamSet) {
        let spec = NetworkSpec::new(vec![
            LayerSpec::Dense(DenseLayerSpec::new(2, 2, ActivationKind::Heaviside)),
            LayerSpec::Dense(DenseLayerSpec::new(2, 1, ActivationKind::Heaviside)),
        ])
        .unwrap();
        let mut params = ParamSet::new();
        params
            .insert("layer0.W", Tensor::matrix(&[&[1.0, 1.0], &[-1.0, -1.0]]))
            .unwrap();
        params
            .insert("layer0.b", Tensor::vector(&[-1.0, 1.0]))
            .unwrap();
        params
            .insert("layer1.W", Tensor::matrix(&[&[1.0, 1.0]]))
            .unwrap();
        params.insert("layer1.b", Tensor::vector(&[-2.0])).unwrap();
        (spec, params)
    }

    fn xor_inputs() -> Tensor {
        Tensor::matrix(&[&[0.0, 1.0, 0.0, 1.0], &[0.0, 0.0, 1.0, 1.0]])
    }

    #[test]
    fn xor_hidden_layer_truth_table_columns() {
        let (spec, params) = xor_spec_and_params();
        let LayerSpec::Dense(hidden) = &spec.layers[0] else {
            unreachable!()
        };
        let (_, y) = dense_forward(
            hidden,
            params.get("layer0.W").unwrap(),
            params.get("layer0.b").unwrap(),
            &xor_inputs(),
        )
        .unwrap();
        // hidden columns for (0,0), (1,0), (0,1), (1,1)
        assert_eq!(y, Tensor::matrix(&[&[0.0, 1.0, 1.0, 1.0], &[1.0, 1.0, 1.0, 0.0]]));
    }

    #[test]
    fn xor_network_full_truth_table() {
        let (spec, params) = xor_spec_and_params();
        let cache = network_forward(&spec, &params, &xor_inputs()).unwrap();
        assert_eq!(cache.output(), &Tensor::matrix(&[&[0.0, 1.0, 1.0, 0.0]]));
    }

    #[test]
    fn depth_zero_network_is_passthrough() {
        let spec = NetworkSpec::default();
        let params = ParamSet::new();
        let batch = Tensor::matrix(&[&[1.0], &[2.0]]);
        let cache = network_forward(&spec, &params, &batch).unwrap();
        assert_eq!(cache.depth(), 0);
        assert_eq!(cache.output(), &batch);
    }

    #[test]
    fn all_linear_net_collapses_to_one_matrix() {
        let spec = NetworkSpec::dense_chain(&[3, 4, 2], ActivationKind::Identity).unwrap();
        let mut rng = Rng::new(12);
        let params = spec.init_params(&mut rng).unwrap();
        let batch = Tensor::matrix(&[&[0.3], &[-0.7], &[1.2]]);
        let cache = network_forward(&spec, &params, &batch).unwrap();

        let w0 = params.get("layer0.W").unwrap();
        let w1 = params.get("layer1.W").unwrap();
        let b0 = params.get("layer0.b").unwrap();
        let b1 = params.get("layer1.b").unwrap();
        // Collapsed map: W1 W0 x + (W1 b0 + b1)
        let collapsed_w = w1.matmul(w0).unwrap();
        let collapsed_b = w1.matvec(b0).unwrap().add(b1).unwrap();
        let direct = affine_forward(&collapsed_w, &collapsed_b, &batch).unwrap();
        for (a, b) in cache.output().data().iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn backprop_zero_upstream_gives_zero_grads() {
        let spec = NetworkSpec::dense_chain(&[3, 4, 2], ActivationKind::Tanh).unwrap();
        let mut rng = Rng::new(4);
        let params = spec.init_params(&mut rng).unwrap();
        let batch = Tensor::matrix(&[&[0.1, 0.4], &[0.2, 0.5], &[0.3, 0.6]]);
        let cache = network_forward(&spec, &params, &batch).unwrap();
        let zero = Tensor::zeros(cache.output().shape().to_vec());
        let grads = backprop(&spec, &params, &cache, &zero).unwrap();
        assert!(grads.iter().all(|(_, g)| g.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn backprop_single_identity_layer_matches_closed_form() {
        // One identity layer without bias contribution recovers the linear
        // regression gradient (U^T U W - U^T S) / N.
        let u = Tensor::matrix(&[
            &[1.0, 0.5],
            &[0.0, 1.5],
            &[2.0, -1.0],
            &[1.0, 1.0],
            &[-0.5, 0.5],
        ]);
        let s = Tensor::vector(&[1.0, 0.5, 0.0, 2.0, -1.0]);
        let w_row = Tensor::matrix(&[&[0.3, -0.2]]);

        let spec = NetworkSpec::new(vec![LayerSpec::Dense(DenseLayerSpec::new(
            2,
            1,
            ActivationKind::Identity,
        ))])
        .unwrap();
        let mut params = ParamSet::new();
        params.insert("layer0.W", w_row.clone()).unwrap();
        params.insert("layer0.b", Tensor::zeros(vec![1])).unwrap();

        let batch = u.transpose().unwrap();
        let targets = s.reshape(vec![1, 5]).unwrap();
        let cache = network_forward(&spec, &params, &batch).unwrap();
        let loss_grad = losses::mse_grad(cache.output(), &targets).unwrap();
        let grads = backprop(&spec, &params, &cache, &loss_grad).unwrap();

        // closed form, scaled by 1/N to match the MSE convention
        let ut_u = u.transpose().unwrap().matmul(&u).unwrap();
        let ut_s = u.transpose().unwrap().matvec(&s).unwrap();
        let w_col = w_row.reshape(vec![2]).unwrap();
        let expect = ut_u
            .matvec(&w_col)
            .unwrap()
            .sub(&ut_s)
            .unwrap()
            .scale(1.0 / 5.0);
        let got = grads.get("layer0.W").unwrap();
        for (a, b) in got.data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn backprop_matches_finite_differences_three_layer_tanh() {
        let spec = NetworkSpec::dense_chain(&[3, 5, 4, 2], ActivationKind::Tanh).unwrap();
        let mut rng = Rng::new(7);
        let params = spec.init_params(&mut rng).unwrap();
        let batch = Tensor::new(
            vec![3, 4],
            (0..12).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        )
        .unwrap();
        let targets = Tensor::new(
            vec![2, 4],
            (0..8).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        )
        .unwrap();

        let cache = network_forward(&spec, &params, &batch).unwrap();
        let loss_grad = losses::mse_grad(cache.output(), &targets).unwrap();
        let analytic = backprop(&spec, &params, &cache, &loss_grad).unwrap();

        let report = gradient_check(
            |p| {
                let c = network_forward(&spec, p, &batch)?;
                losses::mse(c.output(), &targets)
            },
            &params,
            &analytic,
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-6, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn backprop_through_every_dense_activation() {
        for activation in [
            ActivationKind::Sigmoid,
            ActivationKind::Tanh,
            ActivationKind::Relu,
            ActivationKind::LeakyRelu(0.1),
            ActivationKind::Identity,
        ] {
            let spec = NetworkSpec::new(vec![
                LayerSpec::Dense(DenseLayerSpec::new(3, 4, activation)),
                LayerSpec::Dense(DenseLayerSpec::new(4, 2, ActivationKind::Identity)),
            ])
            .unwrap();
            let mut rng = Rng::new(31);
            let params = spec.init_params(&mut rng).unwrap();
            let batch = Tensor::new(
                vec![3, 3],
                (0..9).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            )
            .unwrap();
            let targets = Tensor::new(
                vec![2, 3],
                (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            )
            .unwrap();
            let cache = network_forward(&spec, &params, &batch).unwrap();
            let loss_grad = losses::mse_grad(cache.output(), &targets).unwrap();
            let analytic = backprop(&spec, &params, &cache, &loss_grad).unwrap();
            let report = gradient_check(
                |p| {
                    let c = network_forward(&spec, p, &batch)?;
                    losses::mse(c.output(), &targets)
                },
                &params,
                &analytic,
                1e-6,
            )
            .unwrap();
            assert!(
                report.max_rel_err < 1e-6,
                "{activation:?}: {}",
                report.max_rel_err
            );
        }
    }

    #[test]
    fn backprop_fused_softmax_nll() {
        let spec = NetworkSpec::new(vec![
            LayerSpec::Dense(DenseLayerSpec::new(3, 4, ActivationKind::Tanh)),
            LayerSpec::Dense(DenseLayerSpec::new(4, 3, ActivationKind::Softmax)),
        ])
        .unwrap();
        let mut rng = Rng::new(13);
        let params = spec.init_params(&mut rng).unwrap();
        let batch = Tensor::new(
            vec![3, 4],
            (0..12).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        )
        .unwrap();
        let labels = vec![0usize, 2, 1, 2];

        let cache = network_forward(&spec, &params, &batch).unwrap();
        let fused = losses::nll_fused_grad_from_probs(cache.output(), &labels).unwrap();
        let analytic = backprop(&spec, &params, &cache, &fused).unwrap();
        let report = gradient_check(
            |p| {
                let c = network_forward(&spec, p, &batch)?;
                losses::nll_from_probs(c.output(), &labels)
            },
            &params,
            &analytic,
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-6, "{}", report.max_rel_err);
    }

    #[test]
    fn backprop_heaviside_errors() {
        let (spec, params) = xor_spec_and_params();
        let cache = network_forward(&spec, &params, &xor_inputs()).unwrap();
        let loss_grad = Tensor::zeros(vec![1, 4]).map(|_| 0.25);
        assert!(matches!(
            backprop(&spec, &params, &cache, &loss_grad),
            Err(Error::NonDifferentiable(_))
        ));
    }

    #[test]
    fn param_count_matches_width_formula() {
        // widths 3, 5, 5, 5, 1: weights 15+25+25+5, biases 5+5+5+1 => 86
        let spec =
            NetworkSpec::dense_chain(&[3, 5, 5, 5, 1], ActivationKind::Sigmoid).unwrap();
        assert_eq!(spec.param_count(), 86);
    }

    #[test]
    fn init_schemes() {
        let mut rng = Rng::new(0);
        let zeros = init(InitKind::Zero, &[4, 4], 4, &mut rng);
        assert!(zeros.data().iter().all(|&v| v == 0.0));
        assert!(symmetry_warning(InitKind::Zero, &[4, 4]).is_some());
        assert!(symmetry_warning(InitKind::Zero, &[4]).is_none());
        assert!(symmetry_warning(InitKind::Xavier, &[4, 4]).is_none());

        // sample std within 10% of the target over 1e4 draws
        let draws = 10_000usize;
        let xavier = init(InitKind::Xavier, &[draws], 100, &mut rng);
        let std = (xavier.sum_squares() / draws as f64).sqrt();
        assert!((std - 0.1).abs() < 0.01, "xavier std {std}");

        let he = init(InitKind::He, &[draws], 50, &mut rng);
        let std = (he.sum_squares() / draws as f64).sqrt();
        assert!((std - 0.2).abs() < 0.02, "he std {std}");
    }

    #[test]
    fn network_spec_parse_and_canonical_round_trip() {
        let text = "dense 784 128 relu; dense 128 10 softmax";
        let spec = NetworkSpec::parse(text).unwrap();
        assert_eq!(spec.canonical(), text);
        assert_eq!(NetworkSpec::parse(&spec.canonical()).unwrap(), spec);

        let text = "res 8 8 sigmoid tau=0.5 learn_tau; resblock 8 original; dense 8 3 softmax";
        let spec = NetworkSpec::parse(text).unwrap();
        assert_eq!(NetworkSpec::parse(&spec.canonical()).unwrap(), spec);
    }

    #[test]
    fn network_spec_rejects_bad_inputs() {
        assert!(NetworkSpec::parse("dense 3 relu").is_err());
        assert!(NetworkSpec::parse("conv 3 3").is_err());
        // softmax in a hidden layer
        assert!(NetworkSpec::parse("dense 3 4 softmax; dense 4 2 identity").is_err());
        // widths that do not chain
        assert!(NetworkSpec::parse("dense 3 4 relu; dense 5 2 identity").is_err());
    }
}
