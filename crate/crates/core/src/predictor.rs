//! Relationship predictor: pairwise features, object-relationship attention,
//! hyper-relationship attention, and the predicate head.
//!
//! The decoding pipeline per scene:
//!
//! 1. Each object gets a relationship-view feature
//!    `y_i = relu(FC_ro(v_i ‖ p_i ‖ x'_i ‖ Emb_r(l_i)))` fusing the detector
//!    features, the classifier's contextual feature, and the embedding of
//!    the predicted label.
//! 2. Every ordered pair gets a proposal feature
//!    `z_ij = relu(FC_v3(FC_v1(y_i) ‖ FC_v2(y_j)))`. The `N²` pair rows keep
//!    the diagonal self-pair slots for layout regularity, but self pairs are
//!    never decoded, sampled or scored.
//! 3. Each OR-GAT block first updates objects from relationships through
//!    masked attention — object `i` may only attend to the `2(N−1)` pairs it
//!    takes part in — then updates relationships from the refreshed objects.
//!    Both halves carry their own feed-forward, and every sub-layer is wired
//!    as `x + LN(f(x))`.
//! 4. HR-GAT scores transitive evidence: for a decoded pair `(i, j)` and a
//!    mediator `k`, the hyper-feature is
//!    `h_ijk = relu(FC_h(z_ik ‖ z_ki ‖ z_jk ‖ z_kj))`; the pair feature then
//!    attends over its mediator set with multi-head single-query attention.
//!    With no mediators available (fewer than three objects in play), the
//!    stage is a pass-through.
//! 5. A linear head scores `c_p` predicates per decoded pair, a frequency
//!    bias indexed by the endpoint categories is added, and sigmoids of
//!    those logits are the relationship scores.

use alloc::format;
use alloc::vec::Vec;

use rand_chacha::ChaCha12Rng;

use crate::hypergraph::{mediator_candidates, ordered_pairs, pair_from_index, pair_index, SPATIAL_FEATURE_DIM};
use crate::nn::{
    residual_ln, AttentionMask, Embedding, FeedForward, LayerNorm, Linear, MaskMode,
    MultiHeadAttention,
};
use crate::tensor::{Graph, Parameter, Tensor, TensorError};

/// Mask for the object-from-relationship attention: object `i` may attend
/// exactly to the non-self ordered pairs that contain it, so each of the `N`
/// rows allows `2(N−1)` of the `N²` pair columns.
pub fn object_pair_mask(n: usize, mode: MaskMode) -> Result<AttentionMask, TensorError> {
    let mut allowed = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for p in 0..n * n {
            let (s, o) = pair_from_index(n, p);
            allowed.push(s != o && (s == i || o == i));
        }
    }
    AttentionMask::new(n, n * n, allowed, mode)
}

/// Which pairs to decode and which mediators each one may consult.
///
/// In evaluation mode every non-self pair is decoded with every other object
/// as mediator. In training mode only the sampled pairs are decoded and
/// mediators come from the sampled pairs' object support, which keeps the
/// hyper-feature count proportional to the sample size. Mediator lists are
/// uniform in length by construction, which the attention layout requires.
#[derive(Debug, Clone)]
pub struct PairContext {
    queries: Vec<usize>,
    mediators: Vec<Vec<usize>>,
    n: usize,
}

impl PairContext {
    /// Decode all non-self pairs; mediators are all remaining objects (or
    /// all objects when `include_endpoints` is set).
    pub fn evaluation(n: usize, include_endpoints: bool) -> Self {
        let pairs = ordered_pairs(n);
        let queries: Vec<usize> = pairs.iter().map(|&(i, j)| pair_index(n, i, j)).collect();
        let mediators = pairs
            .iter()
            .map(|&(i, j)| mediator_candidates(n, i, j, include_endpoints))
            .collect();
        Self {
            queries,
            mediators,
            n,
        }
    }

    /// Decode exactly the sampled pairs; mediators are drawn from the union
    /// of the sampled pairs' endpoints.
    pub fn training(n: usize, sampled_pairs: &[(usize, usize)], include_endpoints: bool) -> Self {
        let mut support: Vec<usize> = Vec::new();
        for &(i, j) in sampled_pairs {
            if !support.contains(&i) {
                support.push(i);
            }
            if !support.contains(&j) {
                support.push(j);
            }
        }
        support.sort_unstable();
        let queries: Vec<usize> = sampled_pairs
            .iter()
            .map(|&(i, j)| pair_index(n, i, j))
            .collect();
        let mediators = sampled_pairs
            .iter()
            .map(|&(i, j)| {
                support
                    .iter()
                    .copied()
                    .filter(|&k| include_endpoints || (k != i && k != j))
                    .collect()
            })
            .collect();
        Self {
            queries,
            mediators,
            n,
        }
    }

    pub fn queries(&self) -> &[usize] {
        &self.queries
    }

    pub fn num_objects(&self) -> usize {
        self.n
    }

    fn validate(&self) -> Result<usize, TensorError> {
        let n = self.n;
        if self.mediators.len() != self.queries.len() {
            return Err(TensorError::ShapeMismatch {
                op: "pair_context",
                details: format!(
                    "{} queries but {} mediator lists",
                    self.queries.len(),
                    self.mediators.len()
                ),
            });
        }
        let m = self.mediators.first().map_or(0, Vec::len);
        for (&q, meds) in self.queries.iter().zip(self.mediators.iter()) {
            if q >= n * n {
                return Err(TensorError::IndexOutOfBounds {
                    op: "pair_context",
                    index: q,
                    bound: n * n,
                });
            }
            let (i, j) = pair_from_index(n, q);
            if i == j {
                return Err(TensorError::InvalidValue {
                    op: "pair_context",
                    details: format!("self pair ({i}, {j}) cannot be decoded"),
                });
            }
            if meds.len() != m {
                return Err(TensorError::InvalidValue {
                    op: "pair_context",
                    details: format!(
                        "mediator lists must be uniform: expected {m}, got {}",
                        meds.len()
                    ),
                });
            }
            for &k in meds {
                if k >= n {
                    return Err(TensorError::IndexOutOfBounds {
                        op: "pair_context",
                        index: k,
                        bound: n,
                    });
                }
            }
        }
        Ok(m)
    }
}

/// One OR-GAT block: masked object-from-relationship attention plus its
/// feed-forward, then relationship-from-object attention plus its
/// feed-forward, every sub-layer residual with layer norm.
struct OrGatBlock {
    ma: MultiHeadAttention,
    ma_norm: LayerNorm,
    ma_ffn: FeedForward,
    ma_ffn_norm: LayerNorm,
    at: MultiHeadAttention,
    at_norm: LayerNorm,
    at_ffn: FeedForward,
    at_ffn_norm: LayerNorm,
}

impl OrGatBlock {
    fn new(
        name: &str,
        d_model: usize,
        heads: usize,
        ffn_hidden: usize,
        ln_eps: f64,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self, TensorError> {
        Ok(Self {
            ma: MultiHeadAttention::new(&format!("{name}.ma"), d_model, d_model, d_model, heads, rng)?,
            ma_norm: LayerNorm::new(&format!("{name}.ma_norm"), d_model, ln_eps)?,
            ma_ffn: FeedForward::new(&format!("{name}.ma_ffn"), d_model, ffn_hidden, rng)?,
            ma_ffn_norm: LayerNorm::new(&format!("{name}.ma_ffn_norm"), d_model, ln_eps)?,
            at: MultiHeadAttention::new(&format!("{name}.at"), d_model, d_model, d_model, heads, rng)?,
            at_norm: LayerNorm::new(&format!("{name}.at_norm"), d_model, ln_eps)?,
            at_ffn: FeedForward::new(&format!("{name}.at_ffn"), d_model, ffn_hidden, rng)?,
            at_ffn_norm: LayerNorm::new(&format!("{name}.at_ffn_norm"), d_model, ln_eps)?,
        })
    }

    fn apply(
        &self,
        g: &Graph,
        y: &Tensor,
        z: &Tensor,
        mask: &AttentionMask,
    ) -> Result<(Tensor, Tensor), TensorError> {
        let attended = self.ma.apply(g, y, z, Some(mask))?;
        let y = residual_ln(g, y, &attended, &self.ma_norm)?;
        let fed = self.ma_ffn.apply(g, &y)?;
        let y = residual_ln(g, &y, &fed, &self.ma_ffn_norm)?;

        let attended = self.at.apply(g, z, &y, None)?;
        let z = residual_ln(g, z, &attended, &self.at_norm)?;
        let fed = self.at_ffn.apply(g, &z)?;
        let z = residual_ln(g, &z, &fed, &self.at_ffn_norm)?;
        Ok((y, z))
    }

    fn collect_params(&self, out: &mut Vec<Parameter>) {
        self.ma.collect_params(out);
        self.ma_norm.collect_params(out);
        self.ma_ffn.collect_params(out);
        self.ma_ffn_norm.collect_params(out);
        self.at.collect_params(out);
        self.at_norm.collect_params(out);
        self.at_ffn.collect_params(out);
        self.at_ffn_norm.collect_params(out);
    }
}

/// HR-GAT: builds hyper-features from mediator pair slots and lets each
/// decoded pair attend over them with multi-head single-query attention.
struct HrGat {
    fc_h: Linear,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    at_norm: LayerNorm,
    ffn: FeedForward,
    ffn_norm: LayerNorm,
    heads: usize,
    d_model: usize,
}

impl HrGat {
    fn new(
        name: &str,
        d_model: usize,
        heads: usize,
        ffn_hidden: usize,
        ln_eps: f64,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self, TensorError> {
        if heads == 0 || d_model % heads != 0 {
            return Err(TensorError::InvalidValue {
                op: "hr_gat",
                details: format!("d_model {d_model} not divisible by heads {heads}"),
            });
        }
        Ok(Self {
            fc_h: Linear::new(&format!("{name}.fc_h"), 4 * d_model, d_model, rng)?,
            q: Linear::new(&format!("{name}.q"), d_model, d_model, rng)?,
            k: Linear::new(&format!("{name}.k"), d_model, d_model, rng)?,
            v: Linear::new(&format!("{name}.v"), d_model, d_model, rng)?,
            o: Linear::new(&format!("{name}.o"), d_model, d_model, rng)?,
            at_norm: LayerNorm::new(&format!("{name}.at_norm"), d_model, ln_eps)?,
            ffn: FeedForward::new(&format!("{name}.ffn"), d_model, ffn_hidden, rng)?,
            ffn_norm: LayerNorm::new(&format!("{name}.ffn_norm"), d_model, ln_eps)?,
            heads,
            d_model,
        })
    }

    /// Refines the gathered query-pair features `[Q, d]` with transitive
    /// evidence. `mediator_count` may be zero, in which case the input rows
    /// pass through unchanged.
    fn apply(
        &self,
        g: &Graph,
        z: &Tensor,
        ctx: &PairContext,
        mediator_count: usize,
    ) -> Result<Tensor, TensorError> {
        let zq = z.gather_rows(&ctx.queries)?;
        if mediator_count == 0 {
            return Ok(zq);
        }
        let n = ctx.n;
        let q_count = ctx.queries.len();
        let m = mediator_count;

        // Mediator pair slots, four per (query, mediator).
        let mut ik = Vec::with_capacity(q_count * m);
        let mut ki = Vec::with_capacity(q_count * m);
        let mut jk = Vec::with_capacity(q_count * m);
        let mut kj = Vec::with_capacity(q_count * m);
        for (&qflat, meds) in ctx.queries.iter().zip(ctx.mediators.iter()) {
            let (i, j) = pair_from_index(n, qflat);
            for &k in meds {
                ik.push(pair_index(n, i, k));
                ki.push(pair_index(n, k, i));
                jk.push(pair_index(n, j, k));
                kj.push(pair_index(n, k, j));
            }
        }
        let h_in = Tensor::concat_cols(&[
            &z.gather_rows(&ik)?,
            &z.gather_rows(&ki)?,
            &z.gather_rows(&jk)?,
            &z.gather_rows(&kj)?,
        ])?;
        let h = self.fc_h.apply(g, &h_in)?.relu()?; // [Q·m, d]

        let heads = self.heads;
        let dk = self.d_model / heads;
        let qp = self
            .q
            .apply(g, &zq)?
            .reshape(&[q_count * heads, 1, dk])?;
        let split_ctx = |t: &Tensor| -> Result<Tensor, TensorError> {
            t.reshape(&[q_count, m, heads, dk])?
                .permute(&[0, 2, 1, 3])?
                .reshape(&[q_count * heads, m, dk])
        };
        let kp = split_ctx(&self.k.apply(g, &h)?)?;
        let vp = split_ctx(&self.v.apply(g, &h)?)?;

        let weights = qp
            .bmm(&kp.permute(&[0, 2, 1])?)?
            .scale(1.0 / libm::sqrt(dk as f64))?
            .reshape(&[q_count * heads, m])?
            .softmax_rows()?
            .reshape(&[q_count * heads, 1, m])?;
        let mixed = weights
            .bmm(&vp)?
            .reshape(&[q_count, self.d_model])?;
        let attended = self.o.apply(g, &mixed)?;

        let zq = residual_ln(g, &zq, &attended, &self.at_norm)?;
        let fed = self.ffn.apply(g, &zq)?;
        residual_ln(g, &zq, &fed, &self.ffn_norm)
    }

    fn collect_params(&self, out: &mut Vec<Parameter>) {
        self.fc_h.collect_params(out);
        self.q.collect_params(out);
        self.k.collect_params(out);
        self.v.collect_params(out);
        self.o.collect_params(out);
        self.at_norm.collect_params(out);
        self.ffn.collect_params(out);
        self.ffn_norm.collect_params(out);
    }
}

pub struct RelationshipPredictor {
    emb: Embedding,
    fuse: Linear,
    v1: Linear,
    v2: Linear,
    v3: Linear,
    or_gats: Vec<OrGatBlock>,
    hr_gat: Option<HrGat>,
    head: Linear,
    freq_bias: Parameter,
    use_frequency_bias: bool,
    mask_mode: MaskMode,
    num_categories: usize,
    num_predicates: usize,
    visual_dim: usize,
    class_feature_dim: usize,
}

impl RelationshipPredictor {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        num_categories: usize,
        num_predicates: usize,
        visual_dim: usize,
        class_feature_dim: usize,
        d_emb: usize,
        d_model: usize,
        heads: usize,
        ffn_hidden: usize,
        or_gat_count: usize,
        use_hr_gat: bool,
        use_frequency_bias: bool,
        mask_mode: MaskMode,
        ln_eps: f64,
        embedding_values: Vec<f64>,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self, TensorError> {
        let emb = Embedding::from_values(
            &format!("{name}.emb"),
            num_categories + 1,
            d_emb,
            embedding_values,
        )?;
        let fuse = Linear::new(
            &format!("{name}.fuse"),
            visual_dim + SPATIAL_FEATURE_DIM + class_feature_dim + d_emb,
            d_model,
            rng,
        )?;
        let v1 = Linear::new(&format!("{name}.v1"), d_model, d_model, rng)?;
        let v2 = Linear::new(&format!("{name}.v2"), d_model, d_model, rng)?;
        let v3 = Linear::new(&format!("{name}.v3"), 2 * d_model, d_model, rng)?;
        let mut or_gats = Vec::with_capacity(or_gat_count);
        for b in 0..or_gat_count {
            or_gats.push(OrGatBlock::new(
                &format!("{name}.orgat{b}"),
                d_model,
                heads,
                ffn_hidden,
                ln_eps,
                rng,
            )?);
        }
        let hr_gat = if use_hr_gat {
            Some(HrGat::new(
                &format!("{name}.hr"),
                d_model,
                heads,
                ffn_hidden,
                ln_eps,
                rng,
            )?)
        } else {
            None
        };
        let head = Linear::new(&format!("{name}.head"), d_model, num_predicates, rng)?;
        let freq_bias = Parameter::frozen(
            &format!("{name}.freq_bias.table"),
            &[num_categories * num_categories, num_predicates],
            alloc::vec![0.0; num_categories * num_categories * num_predicates],
        )?;
        Ok(Self {
            emb,
            fuse,
            v1,
            v2,
            v3,
            or_gats,
            hr_gat,
            head,
            freq_bias,
            use_frequency_bias,
            mask_mode,
            num_categories,
            num_predicates,
            visual_dim,
            class_feature_dim,
        })
    }

    pub fn num_predicates(&self) -> usize {
        self.num_predicates
    }

    /// Installs the fitted frequency-bias table, row-major over
    /// `(subject category − 1) · c_o + (object category − 1)`.
    pub fn set_frequency_bias(&self, table: Vec<f64>) -> Result<(), TensorError> {
        self.freq_bias.set_value(table)
    }

    /// Predicate logits `[Q, c_p]` for the decoded pairs of `ctx`, in the
    /// order of `ctx.queries()`. Scores are obtained by applying a sigmoid
    /// to the logits.
    pub fn apply(
        &self,
        g: &Graph,
        visual: &Tensor,
        spatial: &Tensor,
        class_features: &Tensor,
        labels: &[usize],
        ctx: &PairContext,
    ) -> Result<Tensor, TensorError> {
        let n = ctx.n;
        let mediator_count = ctx.validate()?;
        let expect = |t: &Tensor, cols: usize, what: &str| -> Result<(), TensorError> {
            if t.shape() != [n, cols] {
                return Err(TensorError::ShapeMismatch {
                    op: "predictor",
                    details: format!("{what}: expected [{n}, {cols}], got {:?}", t.shape()),
                });
            }
            Ok(())
        };
        expect(visual, self.visual_dim, "visual features")?;
        expect(spatial, SPATIAL_FEATURE_DIM, "spatial features")?;
        expect(class_features, self.class_feature_dim, "classifier features")?;
        if labels.len() != n {
            return Err(TensorError::ShapeMismatch {
                op: "predictor",
                details: format!("{n} objects but {} labels", labels.len()),
            });
        }
        for &l in labels {
            if l == 0 || l > self.num_categories {
                return Err(TensorError::IndexOutOfBounds {
                    op: "predictor",
                    index: l,
                    bound: self.num_categories + 1,
                });
            }
        }

        // Eq-4-style object features for the relationship view.
        let linguistic = self.emb.lookup(g, labels)?;
        let y = self
            .fuse
            .apply(
                g,
                &Tensor::concat_cols(&[visual, spatial, class_features, &linguistic])?,
            )?
            .relu()?;

        // Pair features for all N² ordered slots.
        let a1 = self.v1.apply(g, &y)?;
        let a2 = self.v2.apply(g, &y)?;
        let mut subj = Vec::with_capacity(n * n);
        let mut obj = Vec::with_capacity(n * n);
        for p in 0..n * n {
            let (s, o) = pair_from_index(n, p);
            subj.push(s);
            obj.push(o);
        }
        let z_in = Tensor::concat_cols(&[&a1.gather_rows(&subj)?, &a2.gather_rows(&obj)?])?;
        let mut z = self.v3.apply(g, &z_in)?.relu()?;

        let mut y = y;
        if !self.or_gats.is_empty() {
            let mask = object_pair_mask(n, self.mask_mode)?;
            for block in &self.or_gats {
                let (ny, nz) = block.apply(g, &y, &z, &mask)?;
                y = ny;
                z = nz;
            }
        }

        let decoded = match &self.hr_gat {
            Some(hr) => hr.apply(g, &z, ctx, mediator_count)?,
            None => z.gather_rows(&ctx.queries)?,
        };

        let mut logits = self.head.apply(g, &decoded)?;
        if self.use_frequency_bias {
            let rows: Vec<usize> = ctx
                .queries
                .iter()
                .map(|&q| {
                    let (i, j) = pair_from_index(n, q);
                    (labels[i] - 1) * self.num_categories + (labels[j] - 1)
                })
                .collect();
            let bias = g.leaf(&self.freq_bias)?.gather_rows(&rows)?;
            logits = logits.add(&bias)?;
        }
        Ok(logits)
    }

    pub fn collect_params(&self, out: &mut Vec<Parameter>) {
        self.emb.collect_params(out);
        self.fuse.collect_params(out);
        self.v1.collect_params(out);
        self.v2.collect_params(out);
        self.v3.collect_params(out);
        for block in &self.or_gats {
            block.collect_params(out);
        }
        if let Some(hr) = &self.hr_gat {
            hr.collect_params(out);
        }
        self.head.collect_params(out);
        out.push(self.freq_bias.clone());
    }
}
