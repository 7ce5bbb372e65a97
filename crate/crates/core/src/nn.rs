//! Neural building blocks shared by the classifier and the relationship
//! predictor.
//!
//! Blocks own their [`Parameter`]s, created with deterministic Xavier-uniform
//! initialization from the generator passed at construction, and expose
//! `apply` methods that take the execution [`Graph`] so the same code runs
//! recorded (training) or plain (inference). Every block also reports its
//! parameters through `collect_params` so the model can enumerate them in a
//! stable order for the optimizer, checkpoints, and gradient checks.
//!
//! Attention masking supports two modes with identical mathematics but
//! different numerical paths: `Additive` pushes masked scores down by a large
//! negative constant before the softmax (the exponential then underflows to
//! exact zero), while `Multiplicative` zeroes masked weights after the
//! softmax and renormalizes each row. Either way masked positions hold an
//! exact `0.0` and each row sums to one. A mask row with no allowed entries
//! is rejected when the mask is built.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::tensor::{Graph, Parameter, Tensor, TensorError};

/// Additive shift applied to masked attention scores; far below any score the
/// models produce, and deep enough that `exp` underflows to exact zero.
pub const MASK_SCORE_BIAS: f64 = -1e9;

/// Post-softmax cutoff below which attention weights are snapped to zero.
pub const WEIGHT_SNAP_EPS: f64 = 1e-30;

/// How attention masks are applied to the score matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    /// Add a large negative bias to masked scores before the softmax.
    Additive,
    /// Zero masked weights after the softmax and renormalize each row.
    Multiplicative,
}

/// Sparsity pattern for an attention score matrix of `queries × keys`.
#[derive(Debug, Clone)]
pub struct AttentionMask {
    queries: usize,
    keys: usize,
    allowed: Vec<bool>,
    mode: MaskMode,
}

impl AttentionMask {
    /// Builds a mask from a row-major `allowed` table. Fails if any query row
    /// allows no keys at all, since its attention would be degenerate.
    pub fn new(
        queries: usize,
        keys: usize,
        allowed: Vec<bool>,
        mode: MaskMode,
    ) -> Result<Self, TensorError> {
        if allowed.len() != queries * keys {
            return Err(TensorError::ShapeMismatch {
                op: "attention_mask",
                details: format!(
                    "{queries}x{keys} mask needs {} entries, got {}",
                    queries * keys,
                    allowed.len()
                ),
            });
        }
        for q in 0..queries {
            if !allowed[q * keys..(q + 1) * keys].iter().any(|&a| a) {
                return Err(TensorError::DegenerateRow {
                    op: "attention_mask",
                    row: q,
                });
            }
        }
        Ok(Self {
            queries,
            keys,
            allowed,
            mode,
        })
    }

    pub fn mode(&self) -> MaskMode {
        self.mode
    }

    pub fn is_allowed(&self, query: usize, key: usize) -> bool {
        self.allowed[query * self.keys + key]
    }

    /// Number of allowed keys for one query row.
    pub fn allowed_count(&self, query: usize) -> usize {
        self.allowed[query * self.keys..(query + 1) * self.keys]
            .iter()
            .filter(|&&a| a)
            .count()
    }

    /// Constant score-bias tensor `[heads, queries, keys]` for additive mode.
    fn bias_tensor(&self, heads: usize) -> Result<Tensor, TensorError> {
        let plane: Vec<f64> = self
            .allowed
            .iter()
            .map(|&a| if a { 0.0 } else { MASK_SCORE_BIAS })
            .collect();
        let mut data = Vec::with_capacity(heads * plane.len());
        for _ in 0..heads {
            data.extend_from_slice(&plane);
        }
        Tensor::from_vec(&[heads, self.queries, self.keys], data)
    }

    /// Constant 0/1 weight-mask tensor `[heads, queries, keys]` for
    /// multiplicative mode.
    fn gate_tensor(&self, heads: usize) -> Result<Tensor, TensorError> {
        let plane: Vec<f64> = self
            .allowed
            .iter()
            .map(|&a| if a { 1.0 } else { 0.0 })
            .collect();
        let mut data = Vec::with_capacity(heads * plane.len());
        for _ in 0..heads {
            data.extend_from_slice(&plane);
        }
        Tensor::from_vec(&[heads, self.queries, self.keys], data)
    }
}

/// Draws a Xavier-uniform weight buffer of `fan_in * fan_out` values.
fn xavier_uniform(rng: &mut ChaCha12Rng, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..bound))
        .collect()
}

/// Fully connected layer `y = x·W + b` with weights `[in, out]`.
pub struct Linear {
    w: Parameter,
    b: Parameter,
    fan_in: usize,
    fan_out: usize,
}

impl Linear {
    pub fn new(
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self, TensorError> {
        if fan_in == 0 || fan_out == 0 {
            return Err(TensorError::InvalidValue {
                op: "linear",
                details: format!("`{name}`: zero-sized layer {fan_in}x{fan_out}"),
            });
        }
        let w = Parameter::new(
            &format!("{name}.w"),
            &[fan_in, fan_out],
            xavier_uniform(rng, fan_in, fan_out),
        )?;
        let b = Parameter::new(&format!("{name}.b"), &[fan_out], vec![0.0; fan_out])?;
        Ok(Self {
            w,
            b,
            fan_in,
            fan_out,
        })
    }

    pub fn apply(&self, g: &Graph, x: &Tensor) -> Result<Tensor, TensorError> {
        x.matmul(&g.leaf(&self.w)?)?.add_bias(&g.leaf(&self.b)?)
    }

    pub fn fan_in(&self) -> usize {
        self.fan_in
    }

    pub fn fan_out(&self) -> usize {
        self.fan_out
    }

    pub fn collect_params(&self, out: &mut Vec<Parameter>) {
        out.push(self.w.clone());
        out.push(self.b.clone());
    }
}

/// Learned per-feature layer normalization.
pub struct LayerNorm {
    gain: Parameter,
    shift: Parameter,
    eps: f64,
}

impl LayerNorm {
    pub fn new(name: &str, dim: usize, eps: f64) -> Result<Self, TensorError> {
        let gain = Parameter::new(&format!("{name}.gain"), &[dim], vec![1.0; dim])?;
        let shift = Parameter::new(&format!("{name}.shift"), &[dim], vec![0.0; dim])?;
        Ok(Self { gain, shift, eps })
    }

    pub fn apply(&self, g: &Graph, x: &Tensor) -> Result<Tensor, TensorError> {
        x.layer_norm(&g.leaf(&self.gain)?, &g.leaf(&self.shift)?, self.eps)
    }

    pub fn collect_params(&self, out: &mut Vec<Parameter>) {
        out.push(self.gain.clone());
        out.push(self.shift.clone());
    }
}

/// Token embedding table. Supports hard lookup by id and soft lookup by a
/// probability row per token (the expected embedding under that
/// distribution).
pub struct Embedding {
    table: Parameter,
    vocab: usize,
    dim: usize,
}

impl Embedding {
    /// Builds the table from initial row values (e.g. a pretrained-style
    /// fixed asset); the table remains trainable.
    pub fn from_values(
        name: &str,
        vocab: usize,
        dim: usize,
        values: Vec<f64>,
    ) -> Result<Self, TensorError> {
        let table = Parameter::new(&format!("{name}.table"), &[vocab, dim], values)?;
        Ok(Self { table, vocab, dim })
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Embedding rows for hard ids, `[len(ids), dim]`.
    pub fn lookup(&self, g: &Graph, ids: &[usize]) -> Result<Tensor, TensorError> {
        g.leaf(&self.table)?.gather_rows(ids)
    }

    /// Expected embeddings under per-token distributions `[m, vocab]`.
    pub fn lookup_soft(&self, g: &Graph, probs: &Tensor) -> Result<Tensor, TensorError> {
        probs.matmul(&g.leaf(&self.table)?)
    }

    pub fn collect_params(&self, out: &mut Vec<Parameter>) {
        out.push(self.table.clone());
    }
}

/// Multi-head scaled-dot-product attention. Queries may come from a
/// different feature space than the keys/values context; all projections
/// land in `d_model`, which must be divisible by the head count.
pub struct MultiHeadAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
    d_model: usize,
}

impl MultiHeadAttention {
    pub fn new(
        name: &str,
        query_dim: usize,
        context_dim: usize,
        d_model: usize,
        heads: usize,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self, TensorError> {
        if heads == 0 || d_model % heads != 0 {
            return Err(TensorError::InvalidValue {
                op: "attention",
                details: format!("`{name}`: d_model {d_model} not divisible by heads {heads}"),
            });
        }
        Ok(Self {
            q: Linear::new(&format!("{name}.q"), query_dim, d_model, rng)?,
            k: Linear::new(&format!("{name}.k"), context_dim, d_model, rng)?,
            v: Linear::new(&format!("{name}.v"), context_dim, d_model, rng)?,
            o: Linear::new(&format!("{name}.o"), d_model, d_model, rng)?,
            heads,
            d_model,
        })
    }

    /// Attention weights and projected output for `queries` attending over
    /// `context`. Weights come back as `[heads, n_queries, n_keys]`.
    fn forward_parts(
        &self,
        g: &Graph,
        queries: &Tensor,
        context: &Tensor,
        mask: Option<&AttentionMask>,
    ) -> Result<(Tensor, Tensor), TensorError> {
        let nq = queries.shape()[0];
        let nk = context.shape()[0];
        if nk == 0 {
            return Err(TensorError::InvalidValue {
                op: "attention",
                details: alloc::string::String::from("empty key set"),
            });
        }
        if let Some(m) = mask {
            if m.queries != nq || m.keys != nk {
                return Err(TensorError::ShapeMismatch {
                    op: "attention",
                    details: format!(
                        "mask is {}x{} but scores are {nq}x{nk}",
                        m.queries, m.keys
                    ),
                });
            }
        }
        let h = self.heads;
        let dk = self.d_model / h;

        // [n, d_model] -> [heads, n, dk]
        let split = |t: &Tensor, n: usize| -> Result<Tensor, TensorError> {
            t.reshape(&[n, h, dk])?.permute(&[1, 0, 2])
        };
        let q = split(&self.q.apply(g, queries)?, nq)?;
        let k = split(&self.k.apply(g, context)?, nk)?;
        let v = split(&self.v.apply(g, context)?, nk)?;

        let scores = q
            .bmm(&k.permute(&[0, 2, 1])?)?
            .scale(1.0 / libm::sqrt(dk as f64))?;

        let weights = match mask {
            None => scores
                .reshape(&[h * nq, nk])?
                .softmax_rows()?
                .reshape(&[h, nq, nk])?,
            Some(m) => match m.mode {
                MaskMode::Additive => scores
                    .add(&m.bias_tensor(h)?)?
                    .reshape(&[h * nq, nk])?
                    .softmax_rows()?
                    .zero_small(WEIGHT_SNAP_EPS)?
                    .reshape(&[h, nq, nk])?,
                MaskMode::Multiplicative => scores
                    .reshape(&[h * nq, nk])?
                    .softmax_rows()?
                    .reshape(&[h, nq, nk])?
                    .mul(&m.gate_tensor(h)?)?
                    .reshape(&[h * nq, nk])?
                    .div_rowsum()?
                    .reshape(&[h, nq, nk])?,
            },
        };

        // [heads, nq, dk] -> [nq, d_model], then the output projection.
        let mixed = weights
            .bmm(&v)?
            .permute(&[1, 0, 2])?
            .reshape(&[nq, self.d_model])?;
        Ok((weights, self.o.apply(g, &mixed)?))
    }

    /// Projected attention output `[n_queries, d_model]`.
    pub fn apply(
        &self,
        g: &Graph,
        queries: &Tensor,
        context: &Tensor,
        mask: Option<&AttentionMask>,
    ) -> Result<Tensor, TensorError> {
        Ok(self.forward_parts(g, queries, context, mask)?.1)
    }

    /// Attention weights `[heads, n_queries, n_keys]` on the same forward
    /// path as [`MultiHeadAttention::apply`]; used by invariant tests.
    pub fn weights(
        &self,
        g: &Graph,
        queries: &Tensor,
        context: &Tensor,
        mask: Option<&AttentionMask>,
    ) -> Result<Tensor, TensorError> {
        Ok(self.forward_parts(g, queries, context, mask)?.0)
    }

    pub fn collect_params(&self, out: &mut Vec<Parameter>) {
        self.q.collect_params(out);
        self.k.collect_params(out);
        self.v.collect_params(out);
        self.o.collect_params(out);
    }
}

/// Two-layer position-wise feed-forward block with ReLU.
pub struct FeedForward {
    lin1: Linear,
    lin2: Linear,
}

impl FeedForward {
    pub fn new(
        name: &str,
        d_model: usize,
        hidden: usize,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self, TensorError> {
        Ok(Self {
            lin1: Linear::new(&format!("{name}.lin1"), d_model, hidden, rng)?,
            lin2: Linear::new(&format!("{name}.lin2"), hidden, d_model, rng)?,
        })
    }

    pub fn apply(&self, g: &Graph, x: &Tensor) -> Result<Tensor, TensorError> {
        self.lin2.apply(g, &self.lin1.apply(g, x)?.relu()?)
    }

    pub fn collect_params(&self, out: &mut Vec<Parameter>) {
        self.lin1.collect_params(out);
        self.lin2.collect_params(out);
    }
}

/// Residual sub-layer wiring `x + LN(f(x))` used by every attention and
/// feed-forward block in the pipeline.
pub fn residual_ln(
    g: &Graph,
    x: &Tensor,
    fx: &Tensor,
    norm: &LayerNorm,
) -> Result<Tensor, TensorError> {
    x.add(&norm.apply(g, fx)?)
}

/// Transformer encoder layer: self-attention then feed-forward, each wrapped
/// as `x + LN(f(x))`.
pub struct TransformerLayer {
    attn: MultiHeadAttention,
    attn_norm: LayerNorm,
    ffn: FeedForward,
    ffn_norm: LayerNorm,
}

impl TransformerLayer {
    pub fn new(
        name: &str,
        d_model: usize,
        heads: usize,
        ffn_hidden: usize,
        ln_eps: f64,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self, TensorError> {
        Ok(Self {
            attn: MultiHeadAttention::new(
                &format!("{name}.attn"),
                d_model,
                d_model,
                d_model,
                heads,
                rng,
            )?,
            attn_norm: LayerNorm::new(&format!("{name}.attn_norm"), d_model, ln_eps)?,
            ffn: FeedForward::new(&format!("{name}.ffn"), d_model, ffn_hidden, rng)?,
            ffn_norm: LayerNorm::new(&format!("{name}.ffn_norm"), d_model, ln_eps)?,
        })
    }

    pub fn apply(&self, g: &Graph, x: &Tensor) -> Result<Tensor, TensorError> {
        let attended = self.attn.apply(g, x, x, None)?;
        let x = residual_ln(g, x, &attended, &self.attn_norm)?;
        let fed = self.ffn.apply(g, &x)?;
        residual_ln(g, &x, &fed, &self.ffn_norm)
    }

    pub fn collect_params(&self, out: &mut Vec<Parameter>) {
        self.attn.collect_params(out);
        self.attn_norm.collect_params(out);
        self.ffn.collect_params(out);
        self.ffn_norm.collect_params(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, DOMAIN_MODEL_INIT};
    use crate::tensor::grad_check;
    use approx::assert_relative_eq;

    fn rng() -> ChaCha12Rng {
        stream_rng(11, DOMAIN_MODEL_INIT, 0)
    }

    fn random_input(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut r = stream_rng(seed, DOMAIN_MODEL_INIT, 1);
        Tensor::from_vec(
            &[rows, cols],
            (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn linear_shapes_and_determinism() {
        let l1 = Linear::new("l", 4, 3, &mut rng()).unwrap();
        let l2 = Linear::new("l", 4, 3, &mut rng()).unwrap();
        assert_eq!(l1.w.to_tensor().data(), l2.w.to_tensor().data());
        let x = random_input(5, 4, 1);
        let y = l1.apply(&Graph::inference(), &x).unwrap();
        assert_eq!(y.shape(), &[5, 3]);
    }

    #[test]
    fn attention_rows_sum_to_one_masked_and_unmasked() {
        let mha = MultiHeadAttention::new("a", 6, 6, 6, 2, &mut rng()).unwrap();
        let x = random_input(5, 6, 2);
        let g = Graph::inference();

        for mask in [
            None,
            Some(
                AttentionMask::new(
                    5,
                    5,
                    (0..25).map(|i| i % 3 != 0 || i % 5 == 1).collect(),
                    MaskMode::Additive,
                )
                .unwrap(),
            ),
        ] {
            let w = mha.weights(&g, &x, &x, mask.as_ref()).unwrap();
            assert_eq!(w.shape(), &[2, 5, 5]);
            for row in w.data().chunks(5) {
                let s: f64 = row.iter().sum();
                assert_relative_eq!(s, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn masked_positions_hold_exact_zero_in_both_modes() {
        let x = random_input(4, 6, 3);
        let g = Graph::inference();
        let allowed: Vec<bool> = (0..16).map(|i| i % 4 != 2 || i / 4 == 2).collect();
        for mode in [MaskMode::Additive, MaskMode::Multiplicative] {
            let mha = MultiHeadAttention::new("a", 6, 6, 6, 3, &mut rng()).unwrap();
            let mask = AttentionMask::new(4, 4, allowed.clone(), mode).unwrap();
            let w = mha.weights(&g, &x, &x, Some(&mask)).unwrap();
            for h in 0..3 {
                for q in 0..4 {
                    for k in 0..4 {
                        let v = w.data()[h * 16 + q * 4 + k];
                        if !mask.is_allowed(q, k) {
                            assert_eq!(v, 0.0, "mode {mode:?}: masked weight must be exactly 0");
                        } else {
                            assert!(v > 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn additive_and_multiplicative_masks_agree() {
        // Both modes compute exp(allowed scores) / sum(exp(allowed scores));
        // they must agree to fp tolerance on any non-degenerate mask.
        let x = random_input(5, 8, 4);
        let g = Graph::inference();
        let allowed: Vec<bool> = (0..25).map(|i| (i * 7 + 3) % 5 != 0 || i % 6 == 1).collect();
        let mha = MultiHeadAttention::new("a", 8, 8, 8, 2, &mut rng()).unwrap();
        let wa = mha
            .weights(
                &g,
                &x,
                &x,
                Some(&AttentionMask::new(5, 5, allowed.clone(), MaskMode::Additive).unwrap()),
            )
            .unwrap();
        let wm = mha
            .weights(
                &g,
                &x,
                &x,
                Some(&AttentionMask::new(5, 5, allowed, MaskMode::Multiplicative).unwrap()),
            )
            .unwrap();
        for (a, m) in wa.data().iter().zip(wm.data().iter()) {
            assert_relative_eq!(a, m, epsilon = 1e-12);
        }
    }

    #[test]
    fn fully_masked_row_is_rejected_at_construction() {
        let mut allowed = vec![true; 9];
        for k in 0..3 {
            allowed[1 * 3 + k] = false;
        }
        assert!(matches!(
            AttentionMask::new(3, 3, allowed, MaskMode::Additive),
            Err(TensorError::DegenerateRow { row: 1, .. })
        ));
    }

    #[test]
    fn attention_gradients_check_out() {
        let mha = MultiHeadAttention::new("a", 4, 4, 4, 2, &mut rng()).unwrap();
        let mut params = Vec::new();
        mha.collect_params(&mut params);
        let x = random_input(3, 4, 5);
        let mask =
            AttentionMask::new(3, 3, vec![true, true, false, false, true, true, true, true, true], MaskMode::Additive)
                .unwrap();
        let f = |g: &Graph| -> Result<Tensor, TensorError> {
            mha.apply(g, &x, &x, Some(&mask))?.mean_all()
        };
        let report = grad_check(f, &params, 1e-5, 256, 0).unwrap();
        assert!(
            report.max_rel_error < 1e-6,
            "attention gradient error {}",
            report.max_rel_error
        );
    }

    #[test]
    fn transformer_layer_preserves_shape_and_checks_gradients() {
        let layer = TransformerLayer::new("t", 4, 2, 8, 1e-5, &mut rng()).unwrap();
        let mut params = Vec::new();
        layer.collect_params(&mut params);
        // attn q/k/v/o (w+b) + 2 norms (gain+shift) + ffn 2 linears (w+b).
        assert_eq!(params.len(), 8 + 4 + 4);

        let x = random_input(5, 4, 6);
        let y = layer.apply(&Graph::inference(), &x).unwrap();
        assert_eq!(y.shape(), &[5, 4]);

        let f = |g: &Graph| -> Result<Tensor, TensorError> { layer.apply(g, &x)?.mean_all() };
        let report = grad_check(f, &params, 1e-5, 200, 3).unwrap();
        assert!(
            report.max_rel_error < 1e-6,
            "transformer gradient error {}",
            report.max_rel_error
        );
    }

    #[test]
    fn transformer_layer_is_permutation_equivariant() {
        let layer = TransformerLayer::new("t", 6, 3, 12, 1e-5, &mut rng()).unwrap();
        let x = random_input(4, 6, 7);
        let g = Graph::inference();
        let y = layer.apply(&g, &x).unwrap();

        let perm = [2usize, 0, 3, 1];
        let xp = x.gather_rows(&perm).unwrap();
        let yp = layer.apply(&g, &xp).unwrap();
        let y_perm = y.gather_rows(&perm).unwrap();
        for (a, b) in yp.data().iter().zip(y_perm.data().iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn embedding_lookup_soft_matches_hard_for_one_hot() {
        let values: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let emb = Embedding::from_values("e", 4, 3, values).unwrap();
        let g = Graph::inference();
        let hard = emb.lookup(&g, &[2, 0]).unwrap();
        let mut probs = vec![0.0; 8];
        probs[2] = 1.0; // row 0 -> id 2
        probs[4] = 1.0; // row 1 -> id 0
        let soft = emb
            .lookup_soft(&g, &Tensor::from_vec(&[2, 4], probs).unwrap())
            .unwrap();
        assert_eq!(hard.data(), soft.data());
    }
}
