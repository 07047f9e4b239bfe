//! Recurrent cells (vanilla, GRU, LSTM), sequence unrolling with shared
//! weights, backpropagation through time, bidirectional and stacked
//! wiring, and one-hot vocabulary handling.
//!
//! All cells share the concatenation convention `[h; u]` (hidden state
//! first) and time-invariant weights: one parameter set drives every step
//! of the unrolled sequence, so BPTT accumulates each step's contribution
//! into the same gradient tensors, iterating time in descending order.

use crate::dense::{matmul_a_bt, matmul_at_b};
use crate::error::{Error, Result};
use crate::params::{GradSet, ParamSet};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Vanilla,
    Gru,
    Lstm,
}

/// Widths and kind of one recurrent cell. Gate weight matrices are all
/// `n_h x (n_h + n_u)`; the output map is `n_y x n_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnCellSpec {
    pub kind: CellKind,
    pub n_u: usize,
    pub n_h: usize,
    pub n_y: usize,
}

impl RnnCellSpec {
    pub fn new(kind: CellKind, n_u: usize, n_h: usize, n_y: usize) -> Self {
        RnnCellSpec { kind, n_u, n_h, n_y }
    }

    /// Parameter names for this cell kind, in canonical order.
    pub fn param_names(&self) -> Vec<&'static str> {
        match self.kind {
            CellKind::Vanilla => vec!["W_in", "b", "W_out"],
            CellKind::Gru => vec!["W_r", "b_r", "W_u", "b_u", "W_in", "b", "W_out"],
            CellKind::Lstm => vec![
                "W_f", "b_f", "W_i", "b_i", "W_o", "b_o", "W_c", "b_c", "W_out",
            ],
        }
    }

    /// Fresh parameters: Xavier-scaled gates and output map, zero biases.
    pub fn init_params(&self, rng: &mut crate::rng::Rng) -> Result<ParamSet> {
        let concat = self.n_h + self.n_u;
        let mut params = ParamSet::new();
        for name in self.param_names() {
            let tensor = if name.starts_with('W') {
                if name == "W_out" {
                    crate::dense::init(
                        crate::dense::InitKind::Xavier,
                        &[self.n_y, self.n_h],
                        self.n_h,
                        rng,
                    )
                } else {
                    crate::dense::init(
                        crate::dense::InitKind::Xavier,
                        &[self.n_h, concat],
                        concat,
                        rng,
                    )
                }
            } else {
                Tensor::zeros(vec![self.n_h])
            };
            params.insert(name, tensor)?;
        }
        Ok(params)
    }

    fn check_widths(&self, h_prev: &Tensor, u: &Tensor) -> Result<()> {
        if h_prev.len() != self.n_h || u.len() != self.n_u {
            return Err(Error::ShapeMismatch {
                op: "rnn cell",
                lhs: vec![self.n_h, self.n_u],
                rhs: vec![h_prev.len(), u.len()],
            });
        }
        Ok(())
    }
}

/// `[h; u]` concatenation.
fn concat(h: &Tensor, u: &Tensor) -> Tensor {
    let mut data = Vec::with_capacity(h.len() + u.len());
    data.extend_from_slice(h.data());
    data.extend_from_slice(u.data());
    Tensor::vector(&data)
}

fn split_concat(a: &Tensor, n_h: usize) -> (Tensor, Tensor) {
    let h = Tensor::vector(&a.data()[..n_h]);
    let u = Tensor::vector(&a.data()[n_h..]);
    (h, u)
}

fn sigmoid(t: &Tensor) -> Tensor {
    t.map(|z| 1.0 / (1.0 + (-z).exp()))
}

fn tanh(t: &Tensor) -> Tensor {
    t.map(f64::tanh)
}

fn affine(w: &Tensor, b: &Tensor, x: &Tensor) -> Result<Tensor> {
    w.matvec(x)?.add(b)
}

/// Per-step cache for BPTT: everything the backward pass reuses.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub u: Tensor,
    pub h_prev: Tensor,
    pub h: Tensor,
    // hidden/cell candidate pre- and post-tanh
    z_in: Option<Tensor>,
    candidate: Option<Tensor>,
    // gru gates
    reset: Option<Tensor>,
    update: Option<Tensor>,
    // lstm
    c_prev: Option<Tensor>,
    pub c: Option<Tensor>,
    forget: Option<Tensor>,
    input_gate: Option<Tensor>,
    output_gate: Option<Tensor>,
}

impl StepCache {
    fn base(u: Tensor, h_prev: Tensor, h: Tensor) -> Self {
        StepCache {
            u,
            h_prev,
            h,
            z_in: None,
            candidate: None,
            reset: None,
            update: None,
            c_prev: None,
            c: None,
            forget: None,
            input_gate: None,
            output_gate: None,
        }
    }
}

/// Vanilla step: `h = tanh(W_in [h; u] + b)`, `y = W_out h`.
pub fn rnn_step(
    spec: &RnnCellSpec,
    params: &ParamSet,
    h_prev: &Tensor,
    u: &Tensor,
) -> Result<(StepCache, Tensor)> {
    spec.check_widths(h_prev, u)?;
    let a = concat(h_prev, u);
    let z = affine(params.require("W_in")?, params.require("b")?, &a)?;
    let h = tanh(&z);
    let y = params.require("W_out")?.matvec(&h)?;
    let mut cache = StepCache::base(u.clone(), h_prev.clone(), h);
    cache.z_in = Some(z);
    Ok((cache, y))
}

/// GRU step: reset and update gates, gated candidate, convex blend
/// `h = G_u (.) h_cand + (1 - G_u) (.) h_prev`, `y = W_out h`.
pub fn gru_step(
    spec: &RnnCellSpec,
    params: &ParamSet,
    h_prev: &Tensor,
    u: &Tensor,
) -> Result<(StepCache, Tensor)> {
    spec.check_widths(h_prev, u)?;
    let a = concat(h_prev, u);
    let reset = sigmoid(&affine(params.require("W_r")?, params.require("b_r")?, &a)?);
    let update = sigmoid(&affine(params.require("W_u")?, params.require("b_u")?, &a)?);
    let gated = concat(&reset.hadamard(h_prev)?, u);
    let z = affine(params.require("W_in")?, params.require("b")?, &gated)?;
    let candidate = tanh(&z);
    let h = update
        .hadamard(&candidate)?
        .add(&update.map(|g| 1.0 - g).hadamard(h_prev)?)?;
    let y = params.require("W_out")?.matvec(&h)?;
    let mut cache = StepCache::base(u.clone(), h_prev.clone(), h);
    cache.z_in = Some(z);
    cache.candidate = Some(candidate);
    cache.reset = Some(reset);
    cache.update = Some(update);
    Ok((cache, y))
}

/// LSTM step: forget/input/output gates and the cell-state conveyor
/// `c = G_f (.) c_prev + G_i (.) c_cand`, `h = G_o (.) tanh(c)`.
pub fn lstm_step(
    spec: &RnnCellSpec,
    params: &ParamSet,
    h_prev: &Tensor,
    c_prev: &Tensor,
    u: &Tensor,
) -> Result<(StepCache, Tensor)> {
    spec.check_widths(h_prev, u)?;
    let a = concat(h_prev, u);
    let forget = sigmoid(&affine(params.require("W_f")?, params.require("b_f")?, &a)?);
    let input_gate = sigmoid(&affine(params.require("W_i")?, params.require("b_i")?, &a)?);
    let output_gate = sigmoid(&affine(params.require("W_o")?, params.require("b_o")?, &a)?);
    let z = affine(params.require("W_c")?, params.require("b_c")?, &a)?;
    let candidate = tanh(&z);
    let c = forget
        .hadamard(c_prev)?
        .add(&input_gate.hadamard(&candidate)?)?;
    let h = output_gate.hadamard(&tanh(&c))?;
    let y = params.require("W_out")?.matvec(&h)?;
    let mut cache = StepCache::base(u.clone(), h_prev.clone(), h);
    cache.z_in = Some(z);
    cache.candidate = Some(candidate);
    cache.c_prev = Some(c_prev.clone());
    cache.c = Some(c);
    cache.forget = Some(forget);
    cache.input_gate = Some(input_gate);
    cache.output_gate = Some(output_gate);
    Ok((cache, y))
}

/// Which time steps consume inputs and emit outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WiringMode {
    /// One input at the first step, outputs at every step.
    OneToMany,
    /// Inputs at every step, one output at the final step.
    ManyToOne,
    /// Inputs and outputs aligned one-to-one.
    ManyToManyAligned,
    /// All inputs first, then outputs on the following steps.
    ManyToManyDelayed,
}

/// One input/target sequence pair under a wiring mode.
#[derive(Debug, Clone)]
pub struct SequenceBatch {
    pub inputs: Vec<Tensor>,
    pub targets: Vec<Tensor>,
    pub mode: WiringMode,
}

impl SequenceBatch {
    /// Total unrolled steps for this wiring.
    pub fn total_steps(&self) -> usize {
        match self.mode {
            WiringMode::OneToMany => self.targets.len(),
            WiringMode::ManyToOne | WiringMode::ManyToManyAligned => self.inputs.len(),
            WiringMode::ManyToManyDelayed => self.inputs.len() + self.targets.len(),
        }
    }

    /// Indices of the steps that emit an output, in order.
    pub fn emitting_steps(&self) -> Vec<usize> {
        match self.mode {
            WiringMode::OneToMany => (0..self.targets.len()).collect(),
            WiringMode::ManyToOne => vec![self.inputs.len() - 1],
            WiringMode::ManyToManyAligned => (0..self.inputs.len()).collect(),
            WiringMode::ManyToManyDelayed => {
                (self.inputs.len()..self.inputs.len() + self.targets.len()).collect()
            }
        }
    }

    pub fn validate(&self, spec: &RnnCellSpec) -> Result<()> {
        let ok = match self.mode {
            WiringMode::OneToMany => self.inputs.len() == 1 && !self.targets.is_empty(),
            WiringMode::ManyToOne => !self.inputs.is_empty() && self.targets.len() == 1,
            WiringMode::ManyToManyAligned => {
                !self.inputs.is_empty() && self.inputs.len() == self.targets.len()
            }
            WiringMode::ManyToManyDelayed => !self.inputs.is_empty() && !self.targets.is_empty(),
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "{:?} wiring cannot take {} inputs / {} targets",
                self.mode,
                self.inputs.len(),
                self.targets.len()
            )));
        }
        for u in &self.inputs {
            if u.len() != spec.n_u {
                return Err(Error::ShapeMismatch {
                    op: "sequence inputs",
                    lhs: vec![spec.n_u],
                    rhs: u.shape().to_vec(),
                });
            }
        }
        Ok(())
    }
}

/// Caches and outputs of one unrolled pass.
#[derive(Debug, Clone)]
pub struct Unrolled {
    pub steps: Vec<StepCache>,
    /// Output at every unrolled step (not just emitting ones).
    pub outputs: Vec<Tensor>,
    pub emitting: Vec<usize>,
}

fn input_at(seq: &SequenceBatch, t: usize, n_u: usize) -> Tensor {
    // steps beyond the input sequence feed zeros
    let idx = match seq.mode {
        WiringMode::OneToMany => {
            if t == 0 {
                Some(0)
            } else {
                None
            }
        }
        _ => Some(t),
    };
    idx.and_then(|i| seq.inputs.get(i))
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(vec![n_u]))
}

/// Unrolls the cell over the sequence. The initial hidden state (and LSTM
/// cell state) is zero.
pub fn unroll(spec: &RnnCellSpec, params: &ParamSet, seq: &SequenceBatch) -> Result<Unrolled> {
    seq.validate(spec)?;
    let total = seq.total_steps();
    let mut h = Tensor::zeros(vec![spec.n_h]);
    let mut c = Tensor::zeros(vec![spec.n_h]);
    let mut steps = Vec::with_capacity(total);
    let mut outputs = Vec::with_capacity(total);
    for t in 0..total {
        let u = input_at(seq, t, spec.n_u);
        let (cache, y) = match spec.kind {
            CellKind::Vanilla => rnn_step(spec, params, &h, &u)?,
            CellKind::Gru => gru_step(spec, params, &h, &u)?,
            CellKind::Lstm => {
                let (cache, y) = lstm_step(spec, params, &h, &c, &u)?;
                c = cache.c.clone().expect("lstm cache has cell state");
                (cache, y)
            }
        };
        h = cache.h.clone();
        steps.push(cache);
        outputs.push(y);
    }
    Ok(Unrolled {
        steps,
        outputs,
        emitting: seq.emitting_steps(),
    })
}

/// Gradients from backpropagation through time.
#[derive(Debug, Clone)]
pub struct BpttResult {
    pub grads: GradSet,
    /// Gradient with respect to each unrolled step's input vector.
    pub input_grads: Vec<Tensor>,
}

/// Backpropagation through time. `output_grads[i]` is the loss gradient
/// at the i-th *emitting* step (matching `unrolled.emitting`); gradients
/// accumulate across time into the shared weights.
pub fn bptt(
    spec: &RnnCellSpec,
    params: &ParamSet,
    unrolled: &Unrolled,
    output_grads: &[Tensor],
) -> Result<BpttResult> {
    if output_grads.len() != unrolled.emitting.len() {
        return Err(Error::InvalidArgument(format!(
            "{} output gradients for {} emitting steps",
            output_grads.len(),
            unrolled.emitting.len()
        )));
    }
    let total = unrolled.steps.len();
    let mut y_bars: Vec<Option<&Tensor>> = vec![None; total];
    for (slot, grad) in unrolled.emitting.iter().zip(output_grads) {
        y_bars[*slot] = Some(grad);
    }

    let mut grads = params.zeros_like();
    let mut input_grads = vec![Tensor::zeros(vec![spec.n_u]); total];
    let mut h_bar = Tensor::zeros(vec![spec.n_h]);
    let mut c_bar = Tensor::zeros(vec![spec.n_h]);
    let w_out = params.require("W_out")?;

    for t in (0..total).rev() {
        let cache = &unrolled.steps[t];
        // output tap
        if let Some(y_bar) = y_bars[t] {
            grads
                .get_mut("W_out")
                .expect("grads mirror params")
                .add_scaled(&matmul_a_bt(y_bar, &cache.h)?, 1.0)?;
            h_bar = h_bar.add(&matmul_at_b(w_out, y_bar)?)?;
        }
        match spec.kind {
            CellKind::Vanilla => {
                let z = cache.z_in.as_ref().expect("vanilla cache");
                let z_bar = h_bar.hadamard(&z.map(|v| 1.0 - v.tanh().powi(2)))?;
                let a = concat(&cache.h_prev, &cache.u);
                accumulate_gate(&mut grads, "W_in", "b", &z_bar, &a)?;
                let a_bar = matmul_at_b(params.require("W_in")?, &z_bar)?;
                let (h_prev_bar, u_bar) = split_concat(&a_bar, spec.n_h);
                input_grads[t] = u_bar;
                h_bar = h_prev_bar;
            }
            CellKind::Gru => {
                let reset = cache.reset.as_ref().expect("gru cache");
                let update = cache.update.as_ref().expect("gru cache");
                let candidate = cache.candidate.as_ref().expect("gru cache");
                let z = cache.z_in.as_ref().expect("gru cache");

                // h = update (.) candidate + (1 - update) (.) h_prev
                let cand_bar = h_bar.hadamard(update)?;
                let update_bar = h_bar.hadamard(&candidate.sub(&cache.h_prev)?)?;
                let mut h_prev_bar = h_bar.hadamard(&update.map(|g| 1.0 - g))?;
                let mut u_bar = Tensor::zeros(vec![spec.n_u]);

                // candidate = tanh(W_in [reset (.) h_prev; u] + b)
                let z_bar = cand_bar.hadamard(&z.map(|v| 1.0 - v.tanh().powi(2)))?;
                let gated = concat(&reset.hadamard(&cache.h_prev)?, &cache.u);
                accumulate_gate(&mut grads, "W_in", "b", &z_bar, &gated)?;
                let gated_bar = matmul_at_b(params.require("W_in")?, &z_bar)?;
                let (gated_h_bar, cand_u_bar) = split_concat(&gated_bar, spec.n_h);
                u_bar = u_bar.add(&cand_u_bar)?;
                let reset_bar = gated_h_bar.hadamard(&cache.h_prev)?;
                h_prev_bar = h_prev_bar.add(&gated_h_bar.hadamard(reset)?)?;

                // the two sigmoid gates share the plain [h_prev; u] input
                let a = concat(&cache.h_prev, &cache.u);
                let zu_bar = update_bar.hadamard(&update.map(|g| g * (1.0 - g)))?;
                accumulate_gate(&mut grads, "W_u", "b_u", &zu_bar, &a)?;
                let a_bar_u = matmul_at_b(params.require("W_u")?, &zu_bar)?;
                let zr_bar = reset_bar.hadamard(&reset.map(|g| g * (1.0 - g)))?;
                accumulate_gate(&mut grads, "W_r", "b_r", &zr_bar, &a)?;
                let a_bar_r = matmul_at_b(params.require("W_r")?, &zr_bar)?;
                let a_bar = a_bar_u.add(&a_bar_r)?;
                let (gate_h_bar, gate_u_bar) = split_concat(&a_bar, spec.n_h);
                h_prev_bar = h_prev_bar.add(&gate_h_bar)?;
                u_bar = u_bar.add(&gate_u_bar)?;

                input_grads[t] = u_bar;
                h_bar = h_prev_bar;
            }
            CellKind::Lstm => {
                let forget = cache.forget.as_ref().expect("lstm cache");
                let input_gate = cache.input_gate.as_ref().expect("lstm cache");
                let output_gate = cache.output_gate.as_ref().expect("lstm cache");
                let candidate = cache.candidate.as_ref().expect("lstm cache");
                let z = cache.z_in.as_ref().expect("lstm cache");
                let c = cache.c.as_ref().expect("lstm cache");
                let c_prev = cache.c_prev.as_ref().expect("lstm cache");

                // h = output_gate (.) tanh(c)
                let tanh_c = tanh(c);
                let out_gate_bar = h_bar.hadamard(&tanh_c)?;
                let mut c_total_bar = c_bar.add(
                    &h_bar
                        .hadamard(output_gate)?
                        .hadamard(&tanh_c.map(|v| 1.0 - v * v))?,
                )?;

                // c = forget (.) c_prev + input_gate (.) candidate
                let forget_bar = c_total_bar.hadamard(c_prev)?;
                let input_gate_bar = c_total_bar.hadamard(candidate)?;
                let cand_bar = c_total_bar.hadamard(input_gate)?;
                c_total_bar = c_total_bar.hadamard(forget)?; // becomes c_prev_bar

                let a = concat(&cache.h_prev, &cache.u);
                let mut a_bar = Tensor::zeros(vec![spec.n_h + spec.n_u]);
                let zc_bar = cand_bar.hadamard(&z.map(|v| 1.0 - v.tanh().powi(2)))?;
                accumulate_gate(&mut grads, "W_c", "b_c", &zc_bar, &a)?;
                a_bar = a_bar.add(&matmul_at_b(params.require("W_c")?, &zc_bar)?)?;
                for (w_name, b_name, gate, gate_bar) in [
                    ("W_f", "b_f", forget, &forget_bar),
                    ("W_i", "b_i", input_gate, &input_gate_bar),
                    ("W_o", "b_o", output_gate, &out_gate_bar),
                ] {
                    let zg_bar = gate_bar.hadamard(&gate.map(|g| g * (1.0 - g)))?;
                    accumulate_gate(&mut grads, w_name, b_name, &zg_bar, &a)?;
                    a_bar = a_bar.add(&matmul_at_b(params.require(w_name)?, &zg_bar)?)?;
                }
                let (h_prev_bar, u_bar) = split_concat(&a_bar, spec.n_h);
                input_grads[t] = u_bar;
                h_bar = h_prev_bar;
                c_bar = c_total_bar;
            }
        }
    }
    Ok(BpttResult { grads, input_grads })
}

fn accumulate_gate(
    grads: &mut GradSet,
    w_name: &str,
    b_name: &str,
    z_bar: &Tensor,
    a: &Tensor,
) -> Result<()> {
    grads
        .get_mut(w_name)
        .expect("grads mirror params")
        .add_scaled(&matmul_a_bt(z_bar, a)?, 1.0)?;
    grads
        .get_mut(b_name)
        .expect("grads mirror params")
        .add_scaled(z_bar, 1.0)?;
    Ok(())
}

/// Runs a forward cell over the sequence and a backward cell over the
/// reversed sequence; the state at step t is the concatenation
/// `[h^<t>; g^<t>]` of the two hidden states.
pub fn bidirectional(
    forward_spec: &RnnCellSpec,
    forward_params: &ParamSet,
    backward_spec: &RnnCellSpec,
    backward_params: &ParamSet,
    inputs: &[Tensor],
) -> Result<Vec<Tensor>> {
    if forward_spec.n_u != backward_spec.n_u {
        return Err(Error::InvalidArgument(
            "bidirectional halves must share the input width".into(),
        ));
    }
    let run = |spec: &RnnCellSpec, params: &ParamSet, seq: Vec<Tensor>| -> Result<Vec<Tensor>> {
        let batch = SequenceBatch {
            targets: vec![Tensor::zeros(vec![spec.n_y]); seq.len()],
            inputs: seq,
            mode: WiringMode::ManyToManyAligned,
        };
        let unrolled = unroll(spec, params, &batch)?;
        Ok(unrolled.steps.into_iter().map(|s| s.h).collect())
    };
    let forward_states = run(forward_spec, forward_params, inputs.to_vec())?;
    let mut reversed: Vec<Tensor> = inputs.to_vec();
    reversed.reverse();
    let mut backward_states = run(backward_spec, backward_params, reversed)?;
    backward_states.reverse();
    Ok(forward_states
        .iter()
        .zip(&backward_states)
        .map(|(h, g)| concat(h, g))
        .collect())
}

/// Deep RNN: layer k consumes layer k-1's output sequence, so the widths
/// must chain `n_y[k-1] = n_u[k]`.
pub fn stack_deep(specs: &[(RnnCellSpec, ParamSet)], inputs: &[Tensor]) -> Result<Vec<Tensor>> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("empty RNN stack".into()));
    }
    for pair in specs.windows(2) {
        if pair[0].0.n_y != pair[1].0.n_u {
            return Err(Error::InvalidArgument(format!(
                "stacked cell widths do not chain: n_y {} vs n_u {}",
                pair[0].0.n_y, pair[1].0.n_u
            )));
        }
    }
    let mut sequence: Vec<Tensor> = inputs.to_vec();
    for (spec, params) in specs {
        let batch = SequenceBatch {
            targets: vec![Tensor::zeros(vec![spec.n_y]); sequence.len()],
            inputs: sequence,
            mode: WiringMode::ManyToManyAligned,
        };
        let unrolled = unroll(spec, params, &batch)?;
        sequence = unrolled.outputs;
    }
    Ok(sequence)
}

/// Word vocabulary: one token per line, index = line number. The last two
/// indices are reserved: `size - 2` for unknown words, `size - 1` for the
/// end-of-sentence marker.
#[derive(Debug, Clone)]
pub struct Vocab {
    words: Vec<String>,
}

impl Vocab {
    /// Builds from the word list *excluding* the reserved tokens.
    pub fn new(mut words: Vec<String>) -> Self {
        words.push("<unk>".to_string());
        words.push("<eos>".to_string());
        Vocab { words }
    }

    /// Parses a vocabulary file: one token per line, the last two lines
    /// being the reserved UNK and EOS entries.
    pub fn from_lines(lines: &str) -> Result<Self> {
        let words: Vec<String> = lines.lines().map(|l| l.trim().to_string()).collect();
        if words.len() < 2 {
            return Err(Error::InvalidArgument(
                "vocabulary needs at least the two reserved tokens".into(),
            ));
        }
        Ok(Vocab { words })
    }

    pub fn size(&self) -> usize {
        self.words.len()
    }

    pub fn unk_index(&self) -> usize {
        self.words.len() - 2
    }

    pub fn eos_index(&self) -> usize {
        self.words.len() - 1
    }

    /// Index of a word; unknown words map to the UNK token.
    pub fn index_of(&self, word: &str) -> usize {
        self.words[..self.words.len() - 2]
            .iter()
            .position(|w| w == word)
            .unwrap_or_else(|| self.unk_index())
    }

    pub fn word_at(&self, index: usize) -> Option<&str> {
        self.words.get(index).map(String::as_str)
    }
}

/// Unit vector `e_index` of the given length.
pub fn one_hot_encode(index: usize, vocab_size: usize) -> Result<Tensor> {
    if index >= vocab_size {
        return Err(Error::LabelOutOfRange {
            label: index,
            classes: vocab_size,
        });
    }
    let mut t = Tensor::zeros(vec![vocab_size]);
    t.data_mut()[index] = 1.0;
    Ok(t)
}

/// Inverse of [`one_hot_encode`]: the argmax index.
pub fn one_hot_decode(t: &Tensor) -> usize {
    t.argmax()
}
