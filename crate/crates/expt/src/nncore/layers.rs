//! Layer primitives: parameter registry, linear/MLP stacks, masked
//! multi-head attention, pre-norm transformer blocks, dropout, and the
//! Gaussian-VAE helpers (KL term, reparameterization).
//!
//! Parameters live in a [`ParamRegistry`] owned by the model. A forward pass
//! first [`ParamRegistry::bind`]s the registry onto a fresh [`Tape`], which
//! inserts every parameter as a leaf; layer functions then take the returned
//! [`BoundParams`] to look up leaf ids.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tape::{NodeId, Tape};
use super::tensor::{Real, Tensor};

/// Handle to a parameter in a [`ParamRegistry`]. Ids are stable for the
/// lifetime of the registry and index the gradient/moment vectors produced
/// alongside it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(usize);

impl ParamId {
    /// Dense position of this parameter in its registry (registration order).
    pub(crate) fn index(self) -> usize {
        self.0
    }
}

/// Named parameter store for one model. Names are unique and become the
/// tensor names in checkpoints, so keep them path-like (`"encoder/0/attn/wq"`).
#[derive(Clone, Debug)]
pub struct ParamRegistry<T: Real> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
}

impl<T: Real> Default for ParamRegistry<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamRegistry<T> {
    pub fn new() -> Self {
        ParamRegistry {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(!name.is_empty(), "parameter name must be non-empty");
        assert!(
            !self.names.iter().any(|n| *n == name),
            "duplicate parameter name {name:?}"
        );
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    /// True when every stored parameter value is finite.
    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.all_finite())
    }

    /// Insert every parameter as a tape leaf for one forward pass.
    pub fn bind(&self, tape: &mut Tape<T>) -> BoundParams {
        let nodes = self.values.iter().map(|v| tape.leaf(v.clone())).collect();
        BoundParams { nodes }
    }
}

/// Tape leaf ids for one bound forward pass, aligned with registry ids.
pub struct BoundParams {
    nodes: Vec<NodeId>,
}

impl BoundParams {
    pub fn node(&self, id: ParamId) -> NodeId {
        self.nodes[id.0]
    }

    /// Gradients for every registered parameter in registry order, zeros for
    /// parameters off the loss path. Call after `tape.backward`.
    pub fn grads<T: Real>(&self, tape: &Tape<T>) -> Vec<Tensor<T>> {
        self.nodes.iter().map(|&n| tape.grad_or_zeros(n)).collect()
    }
}

/// Xavier/Glorot uniform draw, the default for all trainable weight matrices
/// here: `U[−a, a]` with `a = √(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<T: Real>(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor<T> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(fan_in, fan_out, |_, _| T::from_f64(rng.gen_range(-a..a)))
}

/// Nonlinearity selector for MLP stacks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Gelu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply<T: Real>(self, tape: &mut Tape<T>, x: NodeId) -> NodeId {
        match self {
            Activation::Gelu => tape.gelu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Identity => x,
        }
    }
}

/// One dense layer: `x·W + b` with `W: [in, out]`, `b: [1, out]`.
#[derive(Clone, Copy, Debug)]
pub struct LinearParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl LinearParams {
    pub fn init<T: Real>(
        reg: &mut ParamRegistry<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        fan_in: usize,
        fan_out: usize,
    ) -> Self {
        let w = reg.register(format!("{name}/w"), xavier_uniform(rng, fan_in, fan_out));
        let b = reg.register(format!("{name}/b"), Tensor::zeros(1, fan_out));
        LinearParams { w, b }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, bound: &BoundParams, x: NodeId) -> NodeId {
        let xw = tape.matmul(x, bound.node(self.w));
        tape.add_row_vec(xw, bound.node(self.b))
    }
}

/// Dense stack with the activation between layers (not after the last).
/// `dims = [in, h₁, …, out]`; a 1-layer MLP is just `[in, out]`.
#[derive(Clone, Debug)]
pub struct MlpParams {
    pub layers: Vec<LinearParams>,
    pub activation: Activation,
}

impl MlpParams {
    pub fn init<T: Real>(
        reg: &mut ParamRegistry<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        dims: &[usize],
        activation: Activation,
    ) -> Self {
        assert!(dims.len() >= 2, "MLP needs at least [in, out] dims");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| LinearParams::init(reg, rng, &format!("{name}/{i}"), w[0], w[1]))
            .collect();
        MlpParams { layers, activation }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, bound: &BoundParams, x: NodeId) -> NodeId {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, bound, h);
            if i < last {
                h = self.activation.apply(tape, h);
            }
        }
        h
    }
}

/// Dropout context for one forward pass: `eval` is the identity, `train`
/// draws inverted-dropout masks from its own RNG stream so a pass is a pure
/// function of (inputs, parameters, stream).
pub struct DropoutCtx {
    rate: f64,
    rng: Option<ChaCha8Rng>,
}

impl DropoutCtx {
    pub fn eval() -> Self {
        DropoutCtx { rate: 0.0, rng: None }
    }

    pub fn train(rate: f64, rng: ChaCha8Rng) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        DropoutCtx { rate, rng: Some(rng) }
    }

    pub fn apply<T: Real>(&mut self, tape: &mut Tape<T>, x: NodeId) -> NodeId {
        let Some(rng) = &mut self.rng else { return x };
        if self.rate == 0.0 {
            return x;
        }
        let keep = 1.0 - self.rate;
        let scale = T::from_f64(1.0 / keep);
        let (rows, cols) = tape.value(x).shape();
        let mask = Tensor::from_fn(rows, cols, |_, _| {
            if rng.gen::<f64>() < keep {
                scale
            } else {
                T::ZERO
            }
        });
        tape.mul_const(x, mask)
    }
}

/// Packed-head attention projections, each `[D, D]` with a `[1, D]` bias.
#[derive(Clone, Copy, Debug)]
pub struct AttentionParams {
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
}

impl AttentionParams {
    pub fn init<T: Real>(
        reg: &mut ParamRegistry<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        d: usize,
    ) -> Self {
        let proj = |reg: &mut ParamRegistry<T>, rng: &mut ChaCha8Rng, which: &str| {
            (
                reg.register(format!("{name}/{which}/w"), xavier_uniform(rng, d, d)),
                reg.register(format!("{name}/{which}/b"), Tensor::zeros(1, d)),
            )
        };
        let (wq, bq) = proj(reg, rng, "q");
        let (wk, bk) = proj(reg, rng, "k");
        let (wv, bv) = proj(reg, rng, "v");
        let (wo, bo) = proj(reg, rng, "o");
        AttentionParams { wq, bq, wk, bk, wv, bv, wo, bo }
    }
}

/// Masked multi-head self-attention over `x: [N, D]`. `mask_bias` is the
/// additive 0/−10⁹ matrix from [`super::mask::AttentionMask::bias`]; dropout
/// (train mode only) applies to the post-softmax attention weights.
pub fn multi_head_attention<T: Real>(
    tape: &mut Tape<T>,
    bound: &BoundParams,
    p: &AttentionParams,
    x: NodeId,
    mask_bias: &Tensor<T>,
    heads: usize,
    dropout: &mut DropoutCtx,
) -> NodeId {
    let (n, d) = tape.value(x).shape();
    assert!(heads > 0, "attention needs at least one head");
    assert_eq!(d % heads, 0, "model dim {d} not divisible by {heads} heads");
    assert_eq!(mask_bias.shape(), (n, n), "mask bias must be N×N");
    let dh = d / heads;
    let scale = T::from_f64(1.0 / (dh as f64).sqrt());

    let project = |tape: &mut Tape<T>, w: ParamId, b: ParamId| {
        let xw = tape.matmul(x, bound.node(w));
        tape.add_row_vec(xw, bound.node(b))
    };
    let q = project(tape, p.wq, p.bq);
    let k = project(tape, p.wk, p.bk);
    let v = project(tape, p.wv, p.bv);

    let mut merged: Option<NodeId> = None;
    for h in 0..heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let qh = tape.slice_cols(q, lo, hi);
        let kh = tape.slice_cols(k, lo, hi);
        let vh = tape.slice_cols(v, lo, hi);
        let scores = tape.matmul_t(qh, false, kh, true);
        let scores = tape.scale(scores, scale);
        let scores = tape.add_const(scores, mask_bias);
        let weights = tape.softmax_rows(scores);
        let weights = dropout.apply(tape, weights);
        let oh = tape.matmul(weights, vh);
        merged = Some(match merged {
            None => oh,
            Some(acc) => tape.concat_cols(acc, oh),
        });
    }
    let concat = merged.expect("heads > 0");
    let ow = tape.matmul(concat, bound.node(p.wo));
    tape.add_row_vec(ow, bound.node(p.bo))
}

/// One pre-norm transformer block: attention and feedforward sublayers, each
/// wrapped as `x + sublayer(layernorm(x))`.
#[derive(Clone, Debug)]
pub struct TransformerLayerParams {
    pub attn: AttentionParams,
    pub ln1_g: ParamId,
    pub ln1_b: ParamId,
    pub ln2_g: ParamId,
    pub ln2_b: ParamId,
    pub ff1: LinearParams,
    pub ff2: LinearParams,
}

impl TransformerLayerParams {
    /// Feedforward hidden width is the conventional 4·D.
    pub fn init<T: Real>(
        reg: &mut ParamRegistry<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        d: usize,
    ) -> Self {
        let attn = AttentionParams::init(reg, rng, &format!("{name}/attn"), d);
        let ln1_g = reg.register(format!("{name}/ln1/g"), Tensor::full(1, d, T::ONE));
        let ln1_b = reg.register(format!("{name}/ln1/b"), Tensor::zeros(1, d));
        let ln2_g = reg.register(format!("{name}/ln2/g"), Tensor::full(1, d, T::ONE));
        let ln2_b = reg.register(format!("{name}/ln2/b"), Tensor::zeros(1, d));
        let ff1 = LinearParams::init(reg, rng, &format!("{name}/ff1"), d, 4 * d);
        let ff2 = LinearParams::init(reg, rng, &format!("{name}/ff2"), 4 * d, d);
        TransformerLayerParams { attn, ln1_g, ln1_b, ln2_g, ln2_b, ff1, ff2 }
    }
}

/// Run one pre-norm block. Masking guarantees output row `i` depends only on
/// input rows the mask allows `i` to attend (plus itself via the residual).
pub fn transformer_layer<T: Real>(
    tape: &mut Tape<T>,
    bound: &BoundParams,
    p: &TransformerLayerParams,
    x: NodeId,
    mask_bias: &Tensor<T>,
    heads: usize,
    ln_eps: T,
    dropout: &mut DropoutCtx,
) -> NodeId {
    let ln1 = tape.layernorm_rows(x, bound.node(p.ln1_g), bound.node(p.ln1_b), ln_eps);
    let attn = multi_head_attention(tape, bound, &p.attn, ln1, mask_bias, heads, dropout);
    let h = tape.add(x, attn);

    let ln2 = tape.layernorm_rows(h, bound.node(p.ln2_g), bound.node(p.ln2_b), ln_eps);
    let f = p.ff1.forward(tape, bound, ln2);
    let f = tape.gelu(f);
    let f = p.ff2.forward(tape, bound, f);
    let f = dropout.apply(tape, f);
    tape.add(h, f)
}

/// Per-row KL(q ‖ N(0, I)) for diagonal Gaussians: rows of `mu`/`logvar` are
/// independent k-dim posteriors; returns `[n, 1]` of
/// `0.5·Σⱼ(μⱼ² + exp(logvarⱼ) − 1 − logvarⱼ)`.
pub fn kl_rows<T: Real>(tape: &mut Tape<T>, mu: NodeId, logvar: NodeId) -> NodeId {
    assert_eq!(
        tape.value(mu).shape(),
        tape.value(logvar).shape(),
        "mu/logvar shape mismatch"
    );
    let mu2 = tape.mul(mu, mu);
    let ev = tape.exp(logvar);
    let s = tape.add(mu2, ev);
    let s = tape.sub(s, logvar);
    let s = tape.add_scalar(s, T::from_f64(-1.0));
    let sums = tape.row_sums(s);
    tape.scale(sums, T::from_f64(0.5))
}

/// Scalar KL for a single diagonal Gaussian (`mu`, `logvar` are `1×k`).
pub fn kl_diag_gaussian<T: Real>(tape: &mut Tape<T>, mu: NodeId, logvar: NodeId) -> NodeId {
    let rows = kl_rows(tape, mu, logvar);
    tape.sum_all(rows)
}

/// Reparameterized sample `z = μ + exp(logvar/2)·ε` with caller-supplied
/// noise; gradients flow to `mu` and `logvar`, not `eps`.
pub fn reparameterize_with<T: Real>(
    tape: &mut Tape<T>,
    mu: NodeId,
    logvar: NodeId,
    eps: Tensor<T>,
) -> NodeId {
    assert_eq!(
        tape.value(mu).shape(),
        tape.value(logvar).shape(),
        "mu/logvar shape mismatch"
    );
    assert_eq!(tape.value(mu).shape(), eps.shape(), "eps shape mismatch");
    let half_lv = tape.scale(logvar, T::from_f64(0.5));
    let sd = tape.exp(half_lv);
    let noise = tape.mul_const(sd, eps);
    tape.add(mu, noise)
}

/// [`reparameterize_with`] drawing ε ~ N(0, I) from `rng`.
pub fn reparameterize<T: Real>(
    tape: &mut Tape<T>,
    mu: NodeId,
    logvar: NodeId,
    rng: &mut ChaCha8Rng,
) -> NodeId {
    let (rows, cols) = tape.value(mu).shape();
    let eps = Tensor::from_fn(rows, cols, |_, _| {
        T::from_f64(rng.sample(rand_distr::StandardNormal))
    });
    reparameterize_with(tape, mu, logvar, eps)
}
