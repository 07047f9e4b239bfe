//! Residual layers and blocks.
//!
//! The simplified layer is `y = P y_prev + tau * sigma(W y_prev + b)`,
//! with `P` an identity skip when widths match and a learnable projection
//! otherwise, and `tau` an optional learnable time-step factor. Blocks
//! come in the two classic arrangements: the original
//! `Weights-BN-ReLU-Weights-BN-(+)-ReLU` and the full pre-activation
//! `BN-ReLU-Weights-BN-ReLU-Weights-(+)`.

use crate::conv::{batchnorm_backward, batchnorm_forward, BatchNormCache, BatchNormSpec};
use crate::dense::{
    activate, activate_prime, affine_forward, matmul_a_bt, matmul_at_b, row_sums, ActivationKind,
    InitKind,
};
use crate::error::{Error, Result};
use crate::params::{GradSet, ParamSet};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub use crate::conv::DEFAULT_BN_EPSILON;

/// Simplified residual layer with an optional projection and time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualLayerSpec {
    pub n_in: usize,
    pub n_out: usize,
    pub activation: ActivationKind,
    pub tau: f64,
    pub learn_tau: bool,
}

impl ResidualLayerSpec {
    pub fn new(n_in: usize, n_out: usize, activation: ActivationKind) -> Self {
        ResidualLayerSpec {
            n_in,
            n_out,
            activation,
            tau: 1.0,
            learn_tau: false,
        }
    }

    pub fn with_tau(mut self, tau: f64, learnable: bool) -> Self {
        self.tau = tau;
        self.learn_tau = learnable;
        self
    }

    /// Skips default to the identity when widths match; otherwise a
    /// learnable projection is required.
    pub fn has_projection(&self) -> bool {
        self.n_in != self.n_out
    }

    pub fn param_count(&self) -> usize {
        let mut count = self.n_out * self.n_in + self.n_out;
        if self.has_projection() {
            count += self.n_out * self.n_in;
        }
        if self.learn_tau {
            count += 1;
        }
        count
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockVariant {
    Original,
    PreActivation,
}

impl BlockVariant {
    pub fn name(&self) -> &'static str {
        match self {
            BlockVariant::Original => "original",
            BlockVariant::PreActivation => "preact",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "original" => Ok(BlockVariant::Original),
            "preact" => Ok(BlockVariant::PreActivation),
            other => Err(Error::InvalidArgument(format!(
                "unknown residual block variant `{other}`"
            ))),
        }
    }
}

/// Residual block over dense weight stages; widths are square so the skip
/// adds without projection.
///
/// The weight stages carry no separate bias: each is followed by (or
/// paired with) a batch norm whose learnable bias subsumes it — a bias
/// feeding straight into batch normalization cancels against the batch
/// mean and would never receive gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlockSpec {
    pub width: usize,
    pub variant: BlockVariant,
    pub epsilon: f64,
}

impl ResidualBlockSpec {
    pub fn new(width: usize, variant: BlockVariant) -> Self {
        ResidualBlockSpec {
            width,
            variant,
            epsilon: DEFAULT_BN_EPSILON,
        }
    }

    fn bn_spec(&self) -> BatchNormSpec {
        BatchNormSpec::new(self.width, self.width).with_epsilon(self.epsilon)
    }

    /// Two bias-free weight stages plus two batch norms, all square.
    pub fn param_count(&self) -> usize {
        let w = self.width;
        2 * w * w + 2 * (w * w + w)
    }
}

pub(crate) fn init_res_layer_params(
    spec: &ResidualLayerSpec,
    prefix: &str,
    params: &mut ParamSet,
    rng: &mut Rng,
) -> Result<()> {
    let kind = match spec.activation {
        ActivationKind::Relu | ActivationKind::LeakyRelu(_) => InitKind::He,
        _ => InitKind::Xavier,
    };
    params.insert(
        format!("{prefix}.W"),
        crate::dense::init(kind, &[spec.n_out, spec.n_in], spec.n_in, rng),
    )?;
    params.insert(format!("{prefix}.b"), Tensor::zeros(vec![spec.n_out]))?;
    if spec.has_projection() {
        params.insert(
            format!("{prefix}.P"),
            crate::dense::init(InitKind::Xavier, &[spec.n_out, spec.n_in], spec.n_in, rng),
        )?;
    }
    if spec.learn_tau {
        params.insert(format!("{prefix}.tau"), Tensor::scalar(spec.tau))?;
    }
    Ok(())
}

pub(crate) fn init_block_params(
    spec: &ResidualBlockSpec,
    prefix: &str,
    params: &mut ParamSet,
    rng: &mut Rng,
) -> Result<()> {
    let w = spec.width;
    params.insert(
        format!("{prefix}.W1"),
        crate::dense::init(InitKind::He, &[w, w], w, rng),
    )?;
    // batch-norm affine starts as the identity map
    params.insert(format!("{prefix}.bn1.W"), Tensor::identity(w))?;
    params.insert(format!("{prefix}.bn1.b"), Tensor::zeros(vec![w]))?;
    params.insert(
        format!("{prefix}.W2"),
        crate::dense::init(InitKind::He, &[w, w], w, rng),
    )?;
    params.insert(format!("{prefix}.bn2.W"), Tensor::identity(w))?;
    params.insert(format!("{prefix}.bn2.b"), Tensor::zeros(vec![w]))?;
    Ok(())
}

/// Cached values of one residual-layer forward pass.
#[derive(Debug, Clone)]
pub struct ResLayerCache {
    pub input: Tensor,
    pub z: Tensor,
    /// `sigma(z)`; the branch the time step scales.
    pub branch: Tensor,
    pub output: Tensor,
    pub tau: f64,
}

/// `y = P y_prev + tau * sigma(W y_prev + b)` over a batch.
pub fn res_layer_forward(
    spec: &ResidualLayerSpec,
    prefix: &str,
    params: &ParamSet,
    y_prev: &Tensor,
) -> Result<ResLayerCache> {
    if y_prev.shape()[0] != spec.n_in {
        return Err(Error::ShapeMismatch {
            op: "res_layer_forward",
            lhs: vec![spec.n_in],
            rhs: y_prev.shape().to_vec(),
        });
    }
    let w = params.require(&format!("{prefix}.W"))?;
    let b = params.require(&format!("{prefix}.b"))?;
    let tau = if spec.learn_tau {
        params.require(&format!("{prefix}.tau"))?.data()[0]
    } else {
        spec.tau
    };
    let z = affine_forward(w, b, y_prev)?;
    let branch = activate(spec.activation, &z);

    let skip = if spec.has_projection() {
        let p = params.get(&format!("{prefix}.P")).ok_or_else(|| {
            Error::ParamMismatch(format!(
                "residual layer `{prefix}` changes width {} -> {} but has no projection",
                spec.n_in, spec.n_out
            ))
        })?;
        if y_prev.rank() == 1 {
            p.matvec(y_prev)?
        } else {
            p.matmul(y_prev)?
        }
    } else {
        y_prev.clone()
    };
    let output = skip.add(&branch.scale(tau))?;
    Ok(ResLayerCache {
        input: y_prev.clone(),
        z,
        branch,
        output,
        tau,
    })
}

/// Backward through [`res_layer_forward`]; writes the layer's gradients
/// into `grads` and returns the input gradient. The skip path contributes
/// an identity term, which is what keeps deep gradients alive.
pub fn res_layer_backward(
    spec: &ResidualLayerSpec,
    prefix: &str,
    params: &ParamSet,
    cache: &ResLayerCache,
    upstream: &Tensor,
    grads: &mut GradSet,
) -> Result<Tensor> {
    let w = params.require(&format!("{prefix}.W"))?;

    if spec.learn_tau {
        let tau_grad = upstream.hadamard(&cache.branch)?.sum();
        *grads
            .get_mut(&format!("{prefix}.tau"))
            .expect("grads mirror params") = Tensor::scalar(tau_grad);
    }

    let branch_bar = upstream.scale(cache.tau);
    let z_bar = branch_bar.hadamard(&activate_prime(spec.activation, &cache.z)?)?;
    *grads
        .get_mut(&format!("{prefix}.W"))
        .expect("grads mirror params") = matmul_a_bt(&z_bar, &cache.input)?;
    *grads
        .get_mut(&format!("{prefix}.b"))
        .expect("grads mirror params") = row_sums(&z_bar);

    let mut input_grad = matmul_at_b(w, &z_bar)?;
    if spec.has_projection() {
        let p = params.require(&format!("{prefix}.P"))?;
        *grads
            .get_mut(&format!("{prefix}.P"))
            .expect("grads mirror params") = matmul_a_bt(upstream, &cache.input)?;
        input_grad = input_grad.add(&matmul_at_b(p, upstream)?)?;
    } else {
        input_grad = input_grad.add(upstream)?;
    }
    Ok(input_grad)
}

/// Cached values of one residual-block forward pass.
#[derive(Debug, Clone)]
pub struct BlockCache {
    pub input: Tensor,
    pub output: Tensor,
    detail: BlockDetail,
}

#[derive(Debug, Clone)]
enum BlockDetail {
    Original {
        bn1: BatchNormCache,
        h1: Tensor,
        r1: Tensor,
        bn2: BatchNormCache,
        sum: Tensor,
    },
    PreActivation {
        bn1: BatchNormCache,
        h1: Tensor,
        r1: Tensor,
        bn2: BatchNormCache,
        h2: Tensor,
        r2: Tensor,
    },
}

struct BlockParams<'a> {
    w1: &'a Tensor,
    bn1_w: &'a Tensor,
    bn1_b: &'a Tensor,
    w2: &'a Tensor,
    bn2_w: &'a Tensor,
    bn2_b: &'a Tensor,
}

fn block_params<'a>(prefix: &str, params: &'a ParamSet) -> Result<BlockParams<'a>> {
    Ok(BlockParams {
        w1: params.require(&format!("{prefix}.W1"))?,
        bn1_w: params.require(&format!("{prefix}.bn1.W"))?,
        bn1_b: params.require(&format!("{prefix}.bn1.b"))?,
        w2: params.require(&format!("{prefix}.W2"))?,
        bn2_w: params.require(&format!("{prefix}.bn2.W"))?,
        bn2_b: params.require(&format!("{prefix}.bn2.b"))?,
    })
}

/// Runs a residual block on a batch; the exact stage order depends on the
/// variant. The original block applies ReLU after the skip addition, the
/// pre-activation block adds raw.
pub fn block_forward(
    spec: &ResidualBlockSpec,
    prefix: &str,
    params: &ParamSet,
    batch: &Tensor,
) -> Result<BlockCache> {
    if batch.rank() != 2 || batch.shape()[0] != spec.width {
        return Err(Error::ShapeMismatch {
            op: "block_forward",
            lhs: vec![spec.width],
            rhs: batch.shape().to_vec(),
        });
    }
    let p = block_params(prefix, params)?;
    let bn = spec.bn_spec();
    match spec.variant {
        BlockVariant::Original => {
            let z1 = p.w1.matmul(batch)?;
            let (bn1, h1) = batchnorm_forward(&bn, p.bn1_w, p.bn1_b, &z1)?;
            let r1 = activate(ActivationKind::Relu, &h1);
            let z2 = p.w2.matmul(&r1)?;
            let (bn2, h2) = batchnorm_forward(&bn, p.bn2_w, p.bn2_b, &z2)?;
            let sum = h2.add(batch)?;
            let output = activate(ActivationKind::Relu, &sum);
            Ok(BlockCache {
                input: batch.clone(),
                output,
                detail: BlockDetail::Original {
                    bn1,
                    h1,
                    r1,
                    bn2,
                    sum,
                },
            })
        }
        BlockVariant::PreActivation => {
            let (bn1, h1) = batchnorm_forward(&bn, p.bn1_w, p.bn1_b, batch)?;
            let r1 = activate(ActivationKind::Relu, &h1);
            let z1 = p.w1.matmul(&r1)?;
            let (bn2, h2) = batchnorm_forward(&bn, p.bn2_w, p.bn2_b, &z1)?;
            let r2 = activate(ActivationKind::Relu, &h2);
            let z2 = p.w2.matmul(&r2)?;
            let output = batch.add(&z2)?;
            Ok(BlockCache {
                input: batch.clone(),
                output,
                detail: BlockDetail::PreActivation {
                    bn1,
                    h1,
                    r1,
                    bn2,
                    h2,
                    r2,
                },
            })
        }
    }
}

/// Backward through [`block_forward`]; writes all eight stage gradients
/// into `grads` and returns the input gradient.
pub fn block_backward(
    spec: &ResidualBlockSpec,
    prefix: &str,
    params: &ParamSet,
    cache: &BlockCache,
    upstream: &Tensor,
    grads: &mut GradSet,
) -> Result<Tensor> {
    let p = block_params(prefix, params)?;
    let bn = spec.bn_spec();
    let mut set = |name: String, value: Tensor| {
        *grads.get_mut(&name).expect("grads mirror params") = value;
    };
    match &cache.detail {
        BlockDetail::Original {
            bn1,
            h1,
            r1,
            bn2,
            sum,
        } => {
            let sum_bar = upstream.hadamard(&activate_prime(ActivationKind::Relu, sum)?)?;
            // skip path
            let mut input_grad = sum_bar.clone();
            let (bn2_wg, bn2_bg, z2_bar) = batchnorm_backward(&bn, p.bn2_w, bn2, &sum_bar)?;
            set(format!("{prefix}.bn2.W"), bn2_wg);
            set(format!("{prefix}.bn2.b"), bn2_bg);
            set(format!("{prefix}.W2"), matmul_a_bt(&z2_bar, r1)?);
            let r1_bar = matmul_at_b(p.w2, &z2_bar)?;
            let h1_bar = r1_bar.hadamard(&activate_prime(ActivationKind::Relu, h1)?)?;
            let (bn1_wg, bn1_bg, z1_bar) = batchnorm_backward(&bn, p.bn1_w, bn1, &h1_bar)?;
            set(format!("{prefix}.bn1.W"), bn1_wg);
            set(format!("{prefix}.bn1.b"), bn1_bg);
            set(format!("{prefix}.W1"), matmul_a_bt(&z1_bar, &cache.input)?);
            input_grad = input_grad.add(&matmul_at_b(p.w1, &z1_bar)?)?;
            Ok(input_grad)
        }
        BlockDetail::PreActivation {
            bn1,
            h1,
            r1,
            bn2,
            h2,
            r2,
        } => {
            // skip path
            let mut input_grad = upstream.clone();
            let z2_bar = upstream;
            set(format!("{prefix}.W2"), matmul_a_bt(z2_bar, r2)?);
            let r2_bar = matmul_at_b(p.w2, z2_bar)?;
            let h2_bar = r2_bar.hadamard(&activate_prime(ActivationKind::Relu, h2)?)?;
            let (bn2_wg, bn2_bg, z1_bar) = batchnorm_backward(&bn, p.bn2_w, bn2, &h2_bar)?;
            set(format!("{prefix}.bn2.W"), bn2_wg);
            set(format!("{prefix}.bn2.b"), bn2_bg);
            set(format!("{prefix}.W1"), matmul_a_bt(&z1_bar, r1)?);
            let r1_bar = matmul_at_b(p.w1, &z1_bar)?;
            let h1_bar = r1_bar.hadamard(&activate_prime(ActivationKind::Relu, h1)?)?;
            let (bn1_wg, bn1_bg, in_bar) = batchnorm_backward(&bn, p.bn1_w, bn1, &h1_bar)?;
            set(format!("{prefix}.bn1.W"), bn1_wg);
            set(format!("{prefix}.bn1.b"), bn1_bg);
            input_grad = input_grad.add(&in_bar)?;
            Ok(input_grad)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::gradient_check;

    fn random_tensor(rng: &mut Rng, shape: Vec<usize>) -> Tensor {
        let count = shape.iter().product();
        let data = (0..count).map(|_| rng.uniform(-1.0, 1.0)).collect();
        Tensor::new(shape, data).unwrap()
    }

    fn zero_layer_params(spec: &ResidualLayerSpec, prefix: &str) -> ParamSet {
        let mut params = ParamSet::new();
        params
            .insert(
                format!("{prefix}.W"),
                Tensor::zeros(vec![spec.n_out, spec.n_in]),
            )
            .unwrap();
        params
            .insert(format!("{prefix}.b"), Tensor::zeros(vec![spec.n_out]))
            .unwrap();
        if spec.learn_tau {
            params
                .insert(format!("{prefix}.tau"), Tensor::scalar(spec.tau))
                .unwrap();
        }
        params
    }

    #[test]
    fn zero_branch_relu_is_identity_skip() {
        let spec = ResidualLayerSpec::new(3, 3, ActivationKind::Relu);
        let params = zero_layer_params(&spec, "layer0");
        let batch = Tensor::matrix(&[&[1.0, -2.0], &[0.5, 0.0], &[-1.5, 3.0]]);
        let cache = res_layer_forward(&spec, "layer0", &params, &batch).unwrap();
        assert_eq!(cache.output, batch);
    }

    #[test]
    fn tau_zero_is_identity_regardless_of_weights() {
        let spec = ResidualLayerSpec::new(3, 3, ActivationKind::Tanh).with_tau(0.0, false);
        let mut rng = Rng::new(21);
        let mut params = ParamSet::new();
        params
            .insert("layer0.W", random_tensor(&mut rng, vec![3, 3]))
            .unwrap();
        params
            .insert("layer0.b", random_tensor(&mut rng, vec![3]))
            .unwrap();
        let batch = random_tensor(&mut rng, vec![3, 4]);
        let cache = res_layer_forward(&spec, "layer0", &params, &batch).unwrap();
        assert_eq!(cache.output, batch);
    }

    #[test]
    fn missing_projection_for_width_change_errors() {
        let spec = ResidualLayerSpec::new(3, 4, ActivationKind::Tanh);
        let mut params = ParamSet::new();
        params.insert("layer0.W", Tensor::zeros(vec![4, 3])).unwrap();
        params.insert("layer0.b", Tensor::zeros(vec![4])).unwrap();
        let batch = Tensor::zeros(vec![3, 2]);
        assert!(matches!(
            res_layer_forward(&spec, "layer0", &params, &batch),
            Err(Error::ParamMismatch(_))
        ));
    }

    #[test]
    fn zero_weight_relu_backward_passes_upstream_through() {
        // sigma'(0) = 0 kills the branch, leaving the pure identity path
        let spec = ResidualLayerSpec::new(3, 3, ActivationKind::Relu);
        let params = zero_layer_params(&spec, "layer0");
        let batch = Tensor::matrix(&[&[1.0], &[2.0], &[3.0]]);
        let cache = res_layer_forward(&spec, "layer0", &params, &batch).unwrap();
        let upstream = Tensor::matrix(&[&[0.3], &[-0.6], &[0.9]]);
        let mut grads = params.zeros_like();
        let input_grad =
            res_layer_backward(&spec, "layer0", &params, &cache, &upstream, &mut grads).unwrap();
        assert_eq!(input_grad, upstream);
    }

    #[test]
    fn res_layer_gradcheck_with_projection_and_tau() {
        let spec = ResidualLayerSpec::new(3, 4, ActivationKind::Tanh).with_tau(0.7, true);
        let mut rng = Rng::new(22);
        let mut params = ParamSet::new();
        init_res_layer_params(&spec, "layer0", &mut params, &mut rng).unwrap();
        let batch = random_tensor(&mut rng, vec![3, 5]);
        let target = random_tensor(&mut rng, vec![4, 5]);

        let cache = res_layer_forward(&spec, "layer0", &params, &batch).unwrap();
        let upstream = cache.output.sub(&target).unwrap();
        let mut analytic = params.zeros_like();
        res_layer_backward(&spec, "layer0", &params, &cache, &upstream, &mut analytic).unwrap();

        let report = gradient_check(
            |p| {
                let c = res_layer_forward(&spec, "layer0", p, &batch)?;
                Ok(c.output.sub(&target)?.sum_squares() / 2.0)
            },
            &params,
            &analytic,
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-6, "{}", report.max_rel_err);
    }

    #[test]
    fn fifty_layer_stack_keeps_gradient_norm() {
        // Fifty zero-weight relu residual layers: the input gradient stays
        // exactly the upstream. The matched plain-dense sigmoid stack
        // shrinks it by orders of magnitude.
        let spec = ResidualLayerSpec::new(4, 4, ActivationKind::Relu);
        let params = zero_layer_params(&spec, "layer0");
        let mut rng = Rng::new(23);
        let batch = random_tensor(&mut rng, vec![4, 2]);
        let upstream = random_tensor(&mut rng, vec![4, 2]);

        let mut caches = Vec::new();
        let mut current = batch.clone();
        for _ in 0..50 {
            let cache = res_layer_forward(&spec, "layer0", &params, &current).unwrap();
            current = cache.output.clone();
            caches.push(cache);
        }
        let mut grad = upstream.clone();
        for cache in caches.iter().rev() {
            let mut sink = params.zeros_like();
            grad = res_layer_backward(&spec, "layer0", &params, cache, &grad, &mut sink).unwrap();
        }
        assert!(grad.norm_l2() >= upstream.norm_l2() - 1e-12);

        // plain sigmoid chain with the same depth
        let dense_spec =
            crate::dense::NetworkSpec::dense_chain(&[4; 51], ActivationKind::Sigmoid).unwrap();
        let dense_params = dense_spec.init_params(&mut rng).unwrap();
        let cache = crate::dense::network_forward(&dense_spec, &dense_params, &batch).unwrap();
        let (_, dense_grad) = crate::dense::backprop_with_input_grad(
            &dense_spec,
            &dense_params,
            &cache,
            &upstream,
        )
        .unwrap();
        assert!(dense_grad.norm_l2() < 1e-3 * upstream.norm_l2());
    }

    #[test]
    fn euler_steps_converge_as_depth_doubles() {
        // Shared (W, b) and tau = T/D: outputs converge as D doubles.
        let mut rng = Rng::new(24);
        let w = random_tensor(&mut rng, vec![4, 4]);
        let b = random_tensor(&mut rng, vec![4]);
        let input = random_tensor(&mut rng, vec![4, 1]);
        let total_time = 1.0;

        let run = |depth: usize| -> Tensor {
            let spec = ResidualLayerSpec::new(4, 4, ActivationKind::Tanh)
                .with_tau(total_time / depth as f64, false);
            let mut params = ParamSet::new();
            params.insert("layer0.W", w.clone()).unwrap();
            params.insert("layer0.b", b.clone()).unwrap();
            let mut current = input.clone();
            for _ in 0..depth {
                current = res_layer_forward(&spec, "layer0", &params, &current)
                    .unwrap()
                    .output;
            }
            current
        };

        let outputs: Vec<Tensor> = [1usize, 2, 4, 8, 16, 32].iter().map(|&d| run(d)).collect();
        let mut diffs = Vec::new();
        for pair in outputs.windows(2) {
            diffs.push(pair[1].sub(&pair[0]).unwrap().norm_l2());
        }
        for pair in diffs.windows(2) {
            assert!(pair[1] < pair[0], "diffs not shrinking: {diffs:?}");
        }
    }

    fn zero_block_params(spec: &ResidualBlockSpec, prefix: &str) -> ParamSet {
        let w = spec.width;
        let mut params = ParamSet::new();
        for name in ["W1", "bn1.W", "W2", "bn2.W"] {
            params
                .insert(format!("{prefix}.{name}"), Tensor::zeros(vec![w, w]))
                .unwrap();
        }
        for name in ["bn1.b", "bn2.b"] {
            params
                .insert(format!("{prefix}.{name}"), Tensor::zeros(vec![w]))
                .unwrap();
        }
        params
    }

    #[test]
    fn zero_parameter_blocks_trace_symbolically() {
        let batch = Tensor::matrix(&[&[1.0, -2.0], &[-0.5, 3.0]]);

        let spec = ResidualBlockSpec::new(2, BlockVariant::Original);
        let params = zero_block_params(&spec, "layer0");
        let cache = block_forward(&spec, "layer0", &params, &batch).unwrap();
        // original: relu(0 + y_prev)
        assert_eq!(cache.output, batch.map(|v| v.max(0.0)));

        let spec = ResidualBlockSpec::new(2, BlockVariant::PreActivation);
        let params = zero_block_params(&spec, "layer0");
        let cache = block_forward(&spec, "layer0", &params, &batch).unwrap();
        // pre-activation: y_prev + 0
        assert_eq!(cache.output, batch);
    }

    #[test]
    fn variant_flag_toggles_post_activation() {
        // A strictly negative constant batch survives the pre-activation
        // block but is zeroed by the original block's post-addition relu.
        let batch = Tensor::matrix(&[&[-1.0, -2.0], &[-3.0, -0.5]]);
        let original = ResidualBlockSpec::new(2, BlockVariant::Original);
        let preact = ResidualBlockSpec::new(2, BlockVariant::PreActivation);
        let p_original = zero_block_params(&original, "layer0");
        let p_preact = zero_block_params(&preact, "layer0");
        let out_original = block_forward(&original, "layer0", &p_original, &batch)
            .unwrap()
            .output;
        let out_preact = block_forward(&preact, "layer0", &p_preact, &batch)
            .unwrap()
            .output;
        assert!(out_original.data().iter().all(|&v| v == 0.0));
        assert_eq!(out_preact, batch);
    }

    #[test]
    fn block_gradcheck_both_variants() {
        for variant in [BlockVariant::Original, BlockVariant::PreActivation] {
            let spec = ResidualBlockSpec::new(8, variant);
            let mut rng = Rng::new(25);
            let mut params = ParamSet::new();
            init_block_params(&spec, "layer0", &mut params, &mut rng).unwrap();
            // move the affines off the identity so nothing is privileged
            for (_, t) in params.iter_mut() {
                for v in t.data_mut() {
                    *v += rng.uniform(-0.05, 0.05);
                }
            }
            let batch = random_tensor(&mut rng, vec![8, 4]);
            let target = random_tensor(&mut rng, vec![8, 4]);

            let cache = block_forward(&spec, "layer0", &params, &batch).unwrap();
            let upstream = cache.output.sub(&target).unwrap();
            let mut analytic = params.zeros_like();
            block_backward(&spec, "layer0", &params, &cache, &upstream, &mut analytic).unwrap();

            let report = gradient_check(
                |p| {
                    let c = block_forward(&spec, "layer0", p, &batch)?;
                    Ok(c.output.sub(&target)?.sum_squares() / 2.0)
                },
                &params,
                &analytic,
                1e-6,
            )
            .unwrap();
            assert!(
                report.max_rel_err < 1e-6,
                "{variant:?}: {}",
                report.max_rel_err
            );
        }
    }

    #[test]
    fn param_counts() {
        let layer = ResidualLayerSpec::new(4, 4, ActivationKind::Relu);
        assert_eq!(layer.param_count(), 20);
        let projected = ResidualLayerSpec::new(4, 6, ActivationKind::Relu).with_tau(1.0, true);
        assert_eq!(projected.param_count(), 24 + 6 + 24 + 1);
        let block = ResidualBlockSpec::new(8, BlockVariant::Original);
        assert_eq!(block.param_count(), 2 * 64 + 2 * (64 + 8));
    }
}
