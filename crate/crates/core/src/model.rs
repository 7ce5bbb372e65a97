//! Full-model assembly: configuration, ablation presets, scene-level
//! prediction and the training loss.
//!
//! The model couples the object classifier with the relationship predictor.
//! Per scene it consumes the detector outputs (boxes, label distributions,
//! visual features), classifies every object, decodes predicate logits for
//! ordered object pairs, and turns them into sigmoid scores. Training
//! optimizes the sum of the object softmax cross-entropy and the pairwise
//! sigmoid binary cross-entropy over a sampled relationship batch.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::classifier::ObjectClassifier;
use crate::hypergraph::{spatial_feature, BoxF, SceneGraph, SPATIAL_FEATURE_DIM};
use crate::nn::MaskMode;
use crate::predictor::{PairContext, RelationshipPredictor};
use crate::rng::{stream_rng, DOMAIN_MODEL_INIT};
use crate::scenes::{embedding_table, Detection};
use crate::tensor::{Graph, Parameter, Tensor, TensorError};

/// Evaluation regime: detector outputs only, or ground-truth objects given.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskMode {
    /// Scene-graph detection: category labels come from the classifier and
    /// triplet matching requires box IoU ≥ 0.5.
    SgDet,
    /// Predicate classification: ground-truth boxes and categories are
    /// given; matching is by object index.
    PredCls,
}

impl TaskMode {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "sgdet" => Some(Self::SgDet),
            "precls" => Some(Self::PredCls),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SgDet => "sgdet",
            Self::PredCls => "precls",
        }
    }
}

/// Architecture ablations: which refinement stages are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Pairwise features and the predicate head only.
    Baseline,
    /// Adds the object transformer stack (4 layers).
    ObjectRefined,
    /// Object stack (2 layers) plus 2 object-relationship attention blocks.
    ObjectRelationship,
    /// Object stack (2 layers), 1 OR-GAT block, and hyper-relationship
    /// attention.
    Full,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Baseline,
        Preset::ObjectRefined,
        Preset::ObjectRelationship,
        Preset::Full,
    ];

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "hln-b" => Some(Self::Baseline),
            "hln-o" => Some(Self::ObjectRefined),
            "hln-or" => Some(Self::ObjectRelationship),
            "hln" => Some(Self::Full),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Baseline => "hln-b",
            Self::ObjectRefined => "hln-o",
            Self::ObjectRelationship => "hln-or",
            Self::Full => "hln",
        }
    }

    /// Overwrites the stage-selection fields of `config`; capacity knobs
    /// (dims, heads) are left untouched.
    pub fn apply(self, config: &mut HlnConfig) {
        let (layers, or_gats, hr) = match self {
            Self::Baseline => (0, 0, false),
            Self::ObjectRefined => (4, 0, false),
            Self::ObjectRelationship => (2, 2, false),
            Self::Full => (2, 1, true),
        };
        config.transformer_layers = layers;
        config.or_gat_count = or_gats;
        config.use_hr_gat = hr;
    }
}

/// Model hyperparameters. Defaults follow the reference description
/// (768-dim, 8 heads, 2 transformer layers, 1 OR-GAT, hyper-relationship
/// attention and frequency bias on); tests and desk-scale runs shrink the
/// capacity knobs through configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct HlnConfig {
    pub num_categories: usize,
    pub num_predicates: usize,
    pub visual_dim: usize,
    pub d_emb: usize,
    pub d_model: usize,
    pub heads: usize,
    /// Feed-forward hidden width as a multiple of `d_model`.
    pub ffn_multiplier: usize,
    pub transformer_layers: usize,
    pub or_gat_count: usize,
    pub use_hr_gat: bool,
    pub use_frequency_bias: bool,
    pub mask_mode: MaskMode,
    /// Whether hyper-relationship mediators may include the pair's own
    /// endpoints.
    pub include_endpoint_mediators: bool,
    pub ln_eps: f64,
    /// Relationship sample budget per scene during training.
    pub sample_size: usize,
    /// Cap on the positive fraction of a sampled relationship batch.
    pub max_positive_fraction: f64,
}

impl Default for HlnConfig {
    fn default() -> Self {
        Self {
            num_categories: 10,
            num_predicates: 8,
            visual_dim: 64,
            d_emb: 200,
            d_model: 768,
            heads: 8,
            ffn_multiplier: 2,
            transformer_layers: 2,
            or_gat_count: 1,
            use_hr_gat: true,
            use_frequency_bias: true,
            mask_mode: MaskMode::Additive,
            include_endpoint_mediators: false,
            ln_eps: 1e-5,
            sample_size: 256,
            max_positive_fraction: 0.25,
        }
    }
}

impl HlnConfig {
    pub fn validate(&self) -> Result<(), TensorError> {
        let fail = |details: String| Err(TensorError::InvalidValue {
            op: "model_config",
            details,
        });
        if self.num_categories == 0 || self.num_predicates == 0 {
            return fail(String::from("vocabularies must be non-empty"));
        }
        if self.visual_dim == 0 || self.d_emb == 0 || self.d_model == 0 {
            return fail(String::from("feature dimensions must be positive"));
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return fail(format!(
                "d_model {} must be a positive multiple of heads {}",
                self.d_model, self.heads
            ));
        }
        if self.ffn_multiplier == 0 {
            return fail(String::from("ffn_multiplier must be at least 1"));
        }
        if !(self.ln_eps.is_finite() && self.ln_eps > 0.0) {
            return fail(String::from("ln_eps must be finite and positive"));
        }
        if self.sample_size == 0 {
            return fail(String::from("sample_size must be at least 1"));
        }
        if !(self.max_positive_fraction > 0.0 && self.max_positive_fraction <= 1.0) {
            return fail(String::from("max_positive_fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    fn ffn_hidden(&self) -> usize {
        self.ffn_multiplier * self.d_model
    }
}

/// Detector-side inputs for one scene, as tensors.
#[derive(Debug, Clone)]
pub struct SceneInputs {
    pub width: f64,
    pub height: f64,
    pub boxes: Vec<BoxF>,
    /// `[n, num_categories + 1]` label distributions.
    pub label_probs: Tensor,
    /// `[n, visual_dim]` visual features.
    pub visual: Tensor,
}

impl SceneInputs {
    pub fn new(
        width: f64,
        height: f64,
        boxes: Vec<BoxF>,
        label_probs: Vec<f64>,
        visual: Vec<f64>,
    ) -> Result<Self, TensorError> {
        let n = boxes.len();
        let check_div = |len: usize, what: &str| -> Result<usize, TensorError> {
            if n == 0 || len % n != 0 || len == 0 {
                return Err(TensorError::ShapeMismatch {
                    op: "scene_inputs",
                    details: format!("{what} length {len} does not divide into {n} objects"),
                });
            }
            Ok(len / n)
        };
        let prob_cols = check_div(label_probs.len(), "label_probs")?;
        let vis_cols = check_div(visual.len(), "visual")?;
        Ok(Self {
            width,
            height,
            boxes,
            label_probs: Tensor::from_vec(&[n, prob_cols], label_probs)?,
            visual: Tensor::from_vec(&[n, vis_cols], visual)?,
        })
    }

    pub fn from_detection(det: &Detection, width: f64, height: f64) -> Result<Self, TensorError> {
        Self::new(
            width,
            height,
            det.boxes.clone(),
            det.label_probs.clone(),
            det.visual.clone(),
        )
    }

    pub fn num_objects(&self) -> usize {
        self.boxes.len()
    }

    /// Normalized 9-component spatial features, `[n, 9]`.
    pub fn spatial(&self) -> Result<Tensor, TensorError> {
        let mut data = Vec::with_capacity(self.boxes.len() * SPATIAL_FEATURE_DIM);
        for b in &self.boxes {
            data.extend_from_slice(&spatial_feature(b, self.width, self.height));
        }
        Tensor::from_vec(&[self.boxes.len(), SPATIAL_FEATURE_DIM], data)
    }
}

/// Output of a full forward pass over one scene.
#[derive(Debug, Clone)]
pub struct ScenePrediction {
    /// Category per object: classifier argmax in detection mode, the forced
    /// ground-truth labels in predicate-classification mode.
    pub labels: Vec<usize>,
    /// `[n, num_categories + 1]` classifier logits.
    pub object_logits: Tensor,
    /// Flat pair ids (subject·n + object) for the scored pairs, canonical
    /// ascending order, self pairs excluded.
    pub pair_queries: Vec<usize>,
    /// `[len(pair_queries), num_predicates]` sigmoid scores.
    pub pair_scores: Tensor,
}

/// Scene-level training loss: the traced total plus the detached component
/// values for logging.
#[derive(Debug, Clone)]
pub struct SceneLoss {
    pub total: Tensor,
    pub object_loss: f64,
    pub relationship_loss: f64,
}

pub struct HlnModel {
    config: HlnConfig,
    classifier: ObjectClassifier,
    predictor: RelationshipPredictor,
}

impl HlnModel {
    /// Builds the model. Initialization is fully determined by `seed`: the
    /// two embedding tables come from the embedding-table stream and all
    /// weight matrices from the model-init stream.
    pub fn new(config: &HlnConfig, seed: u64) -> Result<Self, TensorError> {
        config.validate()?;
        let c_o = config.num_categories;
        let emb_o = embedding_table(seed, 0, c_o + 1, config.d_emb);
        let emb_r = embedding_table(seed, 1, c_o + 1, config.d_emb);
        let mut rng = stream_rng(seed, DOMAIN_MODEL_INIT, 0);
        let classifier = ObjectClassifier::new(
            "classifier",
            c_o,
            config.visual_dim,
            config.d_emb,
            config.d_model,
            config.heads,
            config.ffn_hidden(),
            config.transformer_layers,
            config.ln_eps,
            emb_o,
            &mut rng,
        )?;
        let predictor = RelationshipPredictor::new(
            "predictor",
            c_o,
            config.num_predicates,
            config.visual_dim,
            config.d_model,
            config.d_emb,
            config.d_model,
            config.heads,
            config.ffn_hidden(),
            config.or_gat_count,
            config.use_hr_gat,
            config.use_frequency_bias,
            config.mask_mode,
            config.ln_eps,
            emb_r,
            &mut rng,
        )?;
        Ok(Self {
            config: config.clone(),
            classifier,
            predictor,
        })
    }

    pub fn config(&self) -> &HlnConfig {
        &self.config
    }

    /// Every parameter (trainable and frozen) in a stable order.
    pub fn parameters(&self) -> Vec<Parameter> {
        let mut out = Vec::new();
        self.classifier.collect_params(&mut out);
        self.predictor.collect_params(&mut out);
        out
    }

    /// Fits the frequency-bias table from training-split ground truth:
    /// cell `(subject category, object category, predicate)` holds
    /// `ln((count + 1) / (pair total + num_predicates))` — log predicate
    /// frequency with add-one smoothing.
    pub fn fit_frequency_bias<'a, I>(&self, scenes: I) -> Result<(), TensorError>
    where
        I: IntoIterator<Item = &'a SceneGraph>,
    {
        let c_o = self.config.num_categories;
        let c_p = self.config.num_predicates;
        let mut counts = alloc::vec![0u64; c_o * c_o * c_p];
        for graph in scenes {
            for t in &graph.triplets {
                let sc = graph.categories[t.subject];
                let oc = graph.categories[t.object];
                counts[((sc - 1) * c_o + (oc - 1)) * c_p + t.predicate] += 1;
            }
        }
        let mut table = alloc::vec![0.0; c_o * c_o * c_p];
        for pair in 0..c_o * c_o {
            let row = &counts[pair * c_p..(pair + 1) * c_p];
            let total: u64 = row.iter().sum();
            for p in 0..c_p {
                table[pair * c_p + p] =
                    libm::log((row[p] + 1) as f64 / (total + c_p as u64) as f64);
            }
        }
        self.predictor.set_frequency_bias(table)
    }

    fn forced_for_mode<'a>(
        mode: TaskMode,
        gt_categories: Option<&'a [usize]>,
    ) -> Result<Option<&'a [usize]>, TensorError> {
        match mode {
            TaskMode::SgDet => Ok(None),
            TaskMode::PredCls => match gt_categories {
                Some(cats) => Ok(Some(cats)),
                None => Err(TensorError::InvalidValue {
                    op: "model_predict",
                    details: String::from(
                        "predicate-classification mode requires ground-truth categories",
                    ),
                }),
            },
        }
    }

    /// Full forward pass scoring every non-self ordered pair. In
    /// `PredCls` mode `gt_categories` must be provided and is used both for
    /// the label embeddings and the reported labels.
    pub fn predict(
        &self,
        g: &Graph,
        inputs: &SceneInputs,
        mode: TaskMode,
        gt_categories: Option<&[usize]>,
    ) -> Result<ScenePrediction, TensorError> {
        let n = inputs.num_objects();
        if n == 0 {
            return Err(TensorError::InvalidValue {
                op: "model_predict",
                details: String::from("scene has no objects"),
            });
        }
        let forced = Self::forced_for_mode(mode, gt_categories)?;
        let spatial = inputs.spatial()?;
        let cls = self
            .classifier
            .apply(g, &inputs.visual, &spatial, &inputs.label_probs, forced)?;
        if n < 2 {
            return Ok(ScenePrediction {
                labels: cls.labels,
                object_logits: cls.logits,
                pair_queries: Vec::new(),
                pair_scores: Tensor::from_vec(&[0, self.config.num_predicates], Vec::new())?,
            });
        }
        let ctx = PairContext::evaluation(n, self.config.include_endpoint_mediators);
        let logits = self.predictor.apply(
            g,
            &inputs.visual,
            &spatial,
            &cls.features,
            &cls.labels,
            &ctx,
        )?;
        Ok(ScenePrediction {
            labels: cls.labels,
            object_logits: cls.logits,
            pair_queries: ctx.queries().to_vec(),
            pair_scores: logits.sigmoid()?,
        })
    }

    /// Training loss over one scene: object cross-entropy on all proposals
    /// plus relationship binary cross-entropy on the sampled `pairs`, whose
    /// multi-hot targets arrive as `targets` `[len(pairs), num_predicates]`.
    pub fn scene_loss(
        &self,
        g: &Graph,
        inputs: &SceneInputs,
        gt_categories: &[usize],
        mode: TaskMode,
        pairs: &[(usize, usize)],
        targets: &Tensor,
    ) -> Result<SceneLoss, TensorError> {
        let n = inputs.num_objects();
        if pairs.is_empty() {
            return Err(TensorError::InvalidValue {
                op: "scene_loss",
                details: String::from("no relationship pairs sampled"),
            });
        }
        if gt_categories.len() != n {
            return Err(TensorError::ShapeMismatch {
                op: "scene_loss",
                details: format!("{n} objects but {} category targets", gt_categories.len()),
            });
        }
        let forced = Self::forced_for_mode(mode, Some(gt_categories))?;
        let spatial = inputs.spatial()?;
        let cls = self
            .classifier
            .apply(g, &inputs.visual, &spatial, &inputs.label_probs, forced)?;
        let object = cls.logits.softmax_cross_entropy(gt_categories)?;
        let ctx =
            PairContext::training(n, pairs, self.config.include_endpoint_mediators);
        let rel_logits = self.predictor.apply(
            g,
            &inputs.visual,
            &spatial,
            &cls.features,
            &cls.labels,
            &ctx,
        )?;
        let relationship = rel_logits.sigmoid_bce(targets)?;
        let object_loss = object.item()?;
        let relationship_loss = relationship.item()?;
        Ok(SceneLoss {
            total: object.add(&relationship)?,
            object_loss,
            relationship_loss,
        })
    }
}
