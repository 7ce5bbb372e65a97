//! Object classifier.
//!
//! Each detected object is described by a visual feature, the nine-component
//! spatial feature of its box, and the detector's label distribution. The
//! classifier fuses them — `x_i = relu(FC_o(v_i ‖ p_i ‖ Emb_o(c_i)))`, where
//! `Emb_o(c_i)` is the expected category embedding under the detector
//! distribution — then runs a stack of transformer encoder layers so objects
//! can exchange context, and finally scores `c_o + 1` categories (index 0 is
//! background) with a linear head.
//!
//! The per-object feature that feeds the relationship predictor is the
//! output of the last transformer layer (or the fused input when the stack
//! is empty, which is the interaction-free ablation). Predicted labels are
//! the argmax over foreground categories; ground-truth labels can be forced
//! for the classification-given evaluation mode.

use alloc::format;
use alloc::vec::Vec;

use rand_chacha::ChaCha12Rng;

use crate::hypergraph::SPATIAL_FEATURE_DIM;
use crate::nn::{Embedding, Linear, TransformerLayer};
use crate::tensor::{Graph, Tensor, TensorError};

/// Classifier forward products consumed by the loss, the metrics, and the
/// relationship predictor.
pub struct ClassifierOutput {
    /// Contextualized object features `[N, d_model]` (the classifier's last
    /// hidden state).
    pub features: Tensor,
    /// Category logits `[N, c_o + 1]`, background at column 0.
    pub logits: Tensor,
    /// One label per object in `1..=c_o`: forced ground truth when provided,
    /// otherwise the foreground argmax of the logits.
    pub labels: Vec<usize>,
}

pub struct ObjectClassifier {
    emb: Embedding,
    fuse: Linear,
    layers: Vec<TransformerLayer>,
    head: Linear,
    num_categories: usize,
    visual_dim: usize,
}

impl ObjectClassifier {
    /// `embedding_values` seeds the `(c_o + 1) × d_emb` category-embedding
    /// table (row 0 is background); the table remains trainable.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        num_categories: usize,
        visual_dim: usize,
        d_emb: usize,
        d_model: usize,
        heads: usize,
        ffn_hidden: usize,
        transformer_layers: usize,
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
            visual_dim + SPATIAL_FEATURE_DIM + d_emb,
            d_model,
            rng,
        )?;
        let mut layers = Vec::with_capacity(transformer_layers);
        for l in 0..transformer_layers {
            layers.push(TransformerLayer::new(
                &format!("{name}.layer{l}"),
                d_model,
                heads,
                ffn_hidden,
                ln_eps,
                rng,
            )?);
        }
        let head = Linear::new(&format!("{name}.head"), d_model, num_categories + 1, rng)?;
        Ok(Self {
            emb,
            fuse,
            layers,
            head,
            num_categories,
            visual_dim,
        })
    }

    /// Runs the classifier over one scene's proposals.
    ///
    /// * `visual` — `[N, d_v]` detector visual features,
    /// * `spatial` — `[N, 9]` normalized box features,
    /// * `label_probs` — `[N, c_o + 1]` detector label distributions,
    /// * `forced_labels` — ground-truth categories for the
    ///   classification-given mode (must be in `1..=c_o`).
    pub fn apply(
        &self,
        g: &Graph,
        visual: &Tensor,
        spatial: &Tensor,
        label_probs: &Tensor,
        forced_labels: Option<&[usize]>,
    ) -> Result<ClassifierOutput, TensorError> {
        let n = visual.shape().first().copied().unwrap_or(0);
        let expect = |t: &Tensor, cols: usize, what: &str| -> Result<(), TensorError> {
            if t.shape() != [n, cols] {
                return Err(TensorError::ShapeMismatch {
                    op: "classifier",
                    details: format!("{what}: expected [{n}, {cols}], got {:?}", t.shape()),
                });
            }
            Ok(())
        };
        expect(visual, self.visual_dim, "visual features")?;
        expect(spatial, SPATIAL_FEATURE_DIM, "spatial features")?;
        expect(label_probs, self.num_categories + 1, "label distributions")?;
        if let Some(forced) = forced_labels {
            if forced.len() != n {
                return Err(TensorError::ShapeMismatch {
                    op: "classifier",
                    details: format!("{n} objects but {} forced labels", forced.len()),
                });
            }
            for (i, &l) in forced.iter().enumerate() {
                if l == 0 || l > self.num_categories {
                    return Err(TensorError::IndexOutOfBounds {
                        op: "classifier",
                        index: l,
                        bound: self.num_categories + 1,
                    });
                }
                let _ = i;
            }
        }

        let linguistic = self.emb.lookup_soft(g, label_probs)?;
        let fused = self
            .fuse
            .apply(g, &Tensor::concat_cols(&[visual, spatial, &linguistic])?)?
            .relu()?;
        let mut features = fused;
        for layer in &self.layers {
            features = layer.apply(g, &features)?;
        }
        let logits = self.head.apply(g, &features)?;
        let labels = match forced_labels {
            Some(forced) => forced.to_vec(),
            None => self.predicted_labels(&logits),
        };
        Ok(ClassifierOutput {
            features,
            logits,
            labels,
        })
    }

    /// Foreground argmax per row (background column 0 is skipped; ties go to
    /// the lower category id).
    fn predicted_labels(&self, logits: &Tensor) -> Vec<usize> {
        let cols = self.num_categories + 1;
        logits
            .data()
            .chunks(cols)
            .map(|row| {
                let mut best = 1usize;
                for c in 2..cols {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }

    pub fn feature_dim(&self) -> usize {
        self.fuse.fan_out()
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    pub fn collect_params(&self, out: &mut Vec<crate::tensor::Parameter>) {
        self.emb.collect_params(out);
        self.fuse.collect_params(out);
        for layer in &self.layers {
            layer.collect_params(out);
        }
        self.head.collect_params(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, DOMAIN_MODEL_INIT};
    use crate::tensor::grad_check;
    use rand::Rng;

    const C_O: usize = 4;
    const D_V: usize = 5;
    const D_EMB: usize = 3;
    const D_MODEL: usize = 8;

    fn build(layers: usize) -> ObjectClassifier {
        let mut rng = stream_rng(3, DOMAIN_MODEL_INIT, 0);
        let emb_values: Vec<f64> = (0..(C_O + 1) * D_EMB)
            .map(|_| rng.random_range(-0.5..0.5))
            .collect();
        ObjectClassifier::new(
            "obj", C_O, D_V, D_EMB, D_MODEL, 2, 16, layers, 1e-5, emb_values, &mut rng,
        )
        .unwrap()
    }

    fn inputs(n: usize) -> (Tensor, Tensor, Tensor) {
        let mut rng = stream_rng(9, DOMAIN_MODEL_INIT, 1);
        let visual = Tensor::from_vec(
            &[n, D_V],
            (0..n * D_V).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let spatial = Tensor::from_vec(
            &[n, SPATIAL_FEATURE_DIM],
            (0..n * SPATIAL_FEATURE_DIM)
                .map(|_| rng.random_range(0.0..1.0))
                .collect(),
        )
        .unwrap();
        let mut probs = Vec::with_capacity(n * (C_O + 1));
        for _ in 0..n {
            let raw: Vec<f64> = (0..C_O + 1).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            probs.extend(raw.into_iter().map(|v| v / s));
        }
        let label_probs = Tensor::from_vec(&[n, C_O + 1], probs).unwrap();
        (visual, spatial, label_probs)
    }

    #[test]
    fn output_shapes_and_label_range() {
        let clf = build(2);
        let (v, p, c) = inputs(6);
        let out = clf
            .apply(&Graph::inference(), &v, &p, &c, None)
            .unwrap();
        assert_eq!(out.features.shape(), &[6, D_MODEL]);
        assert_eq!(out.logits.shape(), &[6, C_O + 1]);
        assert_eq!(out.labels.len(), 6);
        assert!(out.labels.iter().all(|&l| (1..=C_O).contains(&l)));
    }

    #[test]
    fn empty_stack_still_produces_features() {
        let clf = build(0);
        let (v, p, c) = inputs(4);
        let out = clf
            .apply(&Graph::inference(), &v, &p, &c, None)
            .unwrap();
        assert_eq!(out.features.shape(), &[4, D_MODEL]);
    }

    #[test]
    fn forced_labels_pass_through_and_validate() {
        let clf = build(1);
        let (v, p, c) = inputs(3);
        let g = Graph::inference();
        let out = clf.apply(&g, &v, &p, &c, Some(&[2, 4, 1])).unwrap();
        assert_eq!(out.labels, &[2, 4, 1]);
        assert!(matches!(
            clf.apply(&g, &v, &p, &c, Some(&[0, 1, 2])),
            Err(TensorError::IndexOutOfBounds { .. })
        ));
        assert!(matches!(
            clf.apply(&g, &v, &p, &c, Some(&[1, 2])),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn classification_loss_gradients_check_out() {
        let clf = build(1);
        let (v, p, c) = inputs(4);
        let mut params = Vec::new();
        clf.collect_params(&mut params);
        let f = |g: &Graph| -> Result<Tensor, TensorError> {
            let out = clf.apply(g, &v, &p, &c, None)?;
            out.logits.softmax_cross_entropy(&[1, 2, 3, 4])
        };
        let report = grad_check(f, &params, 1e-5, 200, 5).unwrap();
        assert!(
            report.max_rel_error < 1e-6,
            "classifier gradient error {}",
            report.max_rel_error
        );
    }

    #[test]
    fn classifier_is_permutation_equivariant() {
        let clf = build(2);
        let (v, p, c) = inputs(5);
        let g = Graph::inference();
        let out = clf.apply(&g, &v, &p, &c, None).unwrap();

        let perm = [4usize, 2, 0, 1, 3];
        let vp = v.gather_rows(&perm).unwrap();
        let pp = p.gather_rows(&perm).unwrap();
        let cp = c.gather_rows(&perm).unwrap();
        let out_p = clf.apply(&g, &vp, &pp, &cp, None).unwrap();
        let expected = out.logits.gather_rows(&perm).unwrap();
        for (a, b) in out_p.logits.data().iter().zip(expected.data().iter()) {
            assert!((a - b).abs() < 1e-10);
        }
        let expected_labels: Vec<usize> = perm.iter().map(|&i| out.labels[i]).collect();
        assert_eq!(out_p.labels, expected_labels);
    }
}
