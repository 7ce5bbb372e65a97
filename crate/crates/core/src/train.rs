//! Training loop: SGD with momentum, the warm-up/step-decay learning-rate
//! schedule, relationship sampling, and deterministic batched updates.
//!
//! Determinism is structural: the batch composition and the relationship
//! sample for step `t` come from an rng stream keyed by `(seed, t)` alone,
//! so a resumed run replays exactly the steps a fresh run would have taken.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::ChaCha12Rng;

use crate::hypergraph::{ordered_pairs, SceneGraph};
use crate::model::{HlnModel, SceneInputs, TaskMode};
use crate::rng::{stream_rng, DOMAIN_TRAIN_STEP};
use crate::tensor::{Gradients, Graph, Parameter, Tensor, TensorError};

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub base_lr: f64,
    pub momentum: f64,
    /// Steps over which the learning rate rises linearly from 0 to
    /// `base_lr`.
    pub warmup_steps: usize,
    /// Steps at which the learning rate is multiplied by `decay_factor`.
    pub decay_milestones: Vec<usize>,
    pub decay_factor: f64,
    pub total_steps: usize,
    /// Scenes per optimization step.
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-3,
            momentum: 0.9,
            warmup_steps: 300,
            decay_milestones: alloc::vec![1200, 1700],
            decay_factor: 0.1,
            total_steps: 2000,
            batch_size: 4,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |details: String| Err(TrainError::InvalidConfig { details });
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return fail(String::from("base_lr must be finite and positive"));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return fail(String::from("momentum must lie in [0, 1)"));
        }
        if self.total_steps == 0 {
            return fail(String::from("total_steps must be at least 1"));
        }
        if self.warmup_steps >= self.total_steps {
            return fail(String::from("warmup_steps must be below total_steps"));
        }
        for (i, &m) in self.decay_milestones.iter().enumerate() {
            if m >= self.total_steps {
                return fail(alloc::format!(
                    "decay milestone {m} is not below total_steps {}",
                    self.total_steps
                ));
            }
            if i > 0 && self.decay_milestones[i - 1] >= m {
                return fail(String::from("decay milestones must be strictly increasing"));
            }
        }
        if !(self.decay_factor.is_finite() && self.decay_factor > 0.0 && self.decay_factor <= 1.0)
        {
            return fail(String::from("decay_factor must lie in (0, 1]"));
        }
        if self.batch_size == 0 {
            return fail(String::from("batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// The scheduled learning rate at `step`: linear warm-up from 0, then the
/// decay factor applied once per passed milestone, in milestone order, so
/// successive drops are bit-exact multiplications of the logged value.
pub fn learning_rate(config: &OptimizerConfig, step: usize) -> f64 {
    let mut lr = if config.warmup_steps > 0 && step < config.warmup_steps {
        config.base_lr * (step as f64 / config.warmup_steps as f64)
    } else {
        config.base_lr
    };
    for &m in &config.decay_milestones {
        if step >= m {
            lr *= config.decay_factor;
        }
    }
    lr
}

/// Training errors.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {details}")]
    InvalidConfig { details: String },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("training step {step} failed: {source}")]
    StepFailed {
        step: usize,
        source: TensorError,
    },
}

/// SGD with momentum: `v ← μ·v + g`, `w ← w − lr·v`. Velocities are keyed
/// by parameter name so they can round-trip through checkpoints.
pub struct SgdMomentum {
    momentum: f64,
    velocities: BTreeMap<String, Vec<f64>>,
}

impl SgdMomentum {
    pub fn new(momentum: f64) -> Self {
        Self {
            momentum,
            velocities: BTreeMap::new(),
        }
    }

    pub fn step(
        &mut self,
        params: &[Parameter],
        grads: &Gradients,
        lr: f64,
    ) -> Result<(), TensorError> {
        for p in params {
            if !p.is_trainable() {
                continue;
            }
            let name = p.name();
            let Some((_, g)) = grads.get(&name) else {
                continue;
            };
            let v = self
                .velocities
                .entry(name.clone())
                .or_insert_with(|| alloc::vec![0.0; p.numel()]);
            if v.len() != g.len() {
                return Err(TensorError::ShapeMismatch {
                    op: "sgd_step",
                    details: alloc::format!(
                        "velocity for {name} has {} entries but gradient has {}",
                        v.len(),
                        g.len()
                    ),
                });
            }
            for (vi, gi) in v.iter_mut().zip(g.iter()) {
                *vi = self.momentum * *vi + gi;
            }
            p.add_scaled(v, -lr)?;
        }
        Ok(())
    }

    /// Velocity snapshot in stable (name-sorted) order.
    pub fn state(&self) -> Vec<(String, Vec<f64>)> {
        self.velocities
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    pub fn restore(&mut self, entries: Vec<(String, Vec<f64>)>) {
        self.velocities = entries.into_iter().collect();
    }
}

/// A sampled relationship batch for one scene: decoded pairs plus their
/// row-major multi-hot predicate targets.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationshipBatch {
    pub pairs: Vec<(usize, usize)>,
    /// `[pairs.len(), num_predicates]`.
    pub targets: Vec<f64>,
}

/// Samples relationship pairs for training. All pairs are used when the
/// scene has at most `sample_size` of them; otherwise positives are capped
/// at `ceil(max_pos_frac · sample_size)` (sampled without replacement) and
/// negatives fill the remainder. Selected pairs keep canonical order.
pub fn sample_relationships(
    graph: &SceneGraph,
    num_predicates: usize,
    rng: &mut ChaCha12Rng,
    sample_size: usize,
    max_pos_frac: f64,
) -> RelationshipBatch {
    let n = graph.boxes.len();
    let all_pairs = ordered_pairs(n);
    let mut gt: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for t in &graph.triplets {
        gt.entry((t.subject, t.object)).or_default().push(t.predicate);
    }

    let selected: Vec<(usize, usize)> = if all_pairs.len() <= sample_size {
        all_pairs
    } else {
        let (positives, negatives): (Vec<_>, Vec<_>) = all_pairs
            .into_iter()
            .partition(|p| gt.contains_key(p));
        let pos_cap = libm::ceil(max_pos_frac * sample_size as f64) as usize;
        let mut chosen: Vec<(usize, usize)> = Vec::with_capacity(sample_size);
        if positives.len() <= pos_cap {
            chosen.extend_from_slice(&positives);
        } else {
            let mut picks = rand::seq::index::sample(rng, positives.len(), pos_cap).into_vec();
            picks.sort_unstable();
            chosen.extend(picks.into_iter().map(|i| positives[i]));
        }
        let need = sample_size - chosen.len();
        if negatives.len() <= need {
            chosen.extend_from_slice(&negatives);
        } else {
            let mut picks = rand::seq::index::sample(rng, negatives.len(), need).into_vec();
            picks.sort_unstable();
            chosen.extend(picks.into_iter().map(|i| negatives[i]));
        }
        chosen.sort_unstable_by_key(|&(i, j)| crate::hypergraph::pair_index(n, i, j));
        chosen
    };

    let mut targets = alloc::vec![0.0; selected.len() * num_predicates];
    for (row, pair) in selected.iter().enumerate() {
        if let Some(preds) = gt.get(pair) {
            for &p in preds {
                targets[row * num_predicates + p] = 1.0;
            }
        }
    }
    RelationshipBatch {
        pairs: selected,
        targets,
    }
}

/// One scene prepared for training: ground truth plus detector tensors.
#[derive(Debug, Clone)]
pub struct TrainScene {
    pub graph: SceneGraph,
    pub inputs: SceneInputs,
}

/// Per-step log record; field order matches the training log format.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    pub object_loss: f64,
    pub relationship_loss: f64,
}

/// Serializable trainer progress (for checkpoint resume).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub step: usize,
    pub velocities: Vec<(String, Vec<f64>)>,
}

/// Drives optimization of a model over a prepared training split.
pub struct Trainer<'m> {
    model: &'m HlnModel,
    config: OptimizerConfig,
    optimizer: SgdMomentum,
    params: Vec<Parameter>,
    seed: u64,
    mode: TaskMode,
    step: usize,
}

impl<'m> Trainer<'m> {
    pub fn new(
        model: &'m HlnModel,
        config: OptimizerConfig,
        seed: u64,
        mode: TaskMode,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        let params = model.parameters();
        let optimizer = SgdMomentum::new(config.momentum);
        Ok(Self {
            model,
            config,
            optimizer,
            params,
            seed,
            mode,
            step: 0,
        })
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn state(&self) -> TrainerState {
        TrainerState {
            step: self.step,
            velocities: self.optimizer.state(),
        }
    }

    pub fn restore(&mut self, state: TrainerState) {
        self.step = state.step;
        self.optimizer.restore(state.velocities);
    }

    /// Runs `count` optimization steps (clipped to the schedule's total),
    /// invoking `on_log` after each. Scene order, batch composition and
    /// relationship samples depend only on `(seed, step)`.
    pub fn run_steps<F>(
        &mut self,
        scenes: &[TrainScene],
        count: usize,
        mut on_log: F,
    ) -> Result<(), TrainError>
    where
        F: FnMut(&StepLog),
    {
        if scenes.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let c_p = self.model.config().num_predicates;
        let sample_size = self.model.config().sample_size;
        let max_pos_frac = self.model.config().max_positive_fraction;
        let end = self.config.total_steps.min(self.step + count);
        while self.step < end {
            let step = self.step;
            let fail = |source: TensorError| TrainError::StepFailed { step, source };
            let lr = learning_rate(&self.config, step);
            let mut rng = stream_rng(self.seed, DOMAIN_TRAIN_STEP, step as u64);
            let batch = self.config.batch_size.min(scenes.len());
            let mut picks = rand::seq::index::sample(&mut rng, scenes.len(), batch).into_vec();
            picks.sort_unstable();

            let g = Graph::recording();
            let mut total: Option<Tensor> = None;
            let mut object_sum = 0.0;
            let mut relationship_sum = 0.0;
            for &scene_idx in &picks {
                let scene = &scenes[scene_idx];
                let sample = sample_relationships(
                    &scene.graph,
                    c_p,
                    &mut rng,
                    sample_size,
                    max_pos_frac,
                );
                let targets =
                    Tensor::from_vec(&[sample.pairs.len(), c_p], sample.targets.clone())
                        .map_err(fail)?;
                let loss = self
                    .model
                    .scene_loss(
                        &g,
                        &scene.inputs,
                        &scene.graph.categories,
                        self.mode,
                        &sample.pairs,
                        &targets,
                    )
                    .map_err(fail)?;
                object_sum += loss.object_loss;
                relationship_sum += loss.relationship_loss;
                total = Some(match total {
                    None => loss.total,
                    Some(t) => t.add(&loss.total).map_err(fail)?,
                });
            }
            let total = total
                .expect("batch is non-empty")
                .scale(1.0 / batch as f64)
                .map_err(fail)?;
            let grads = g.backward(&total).map_err(fail)?;
            self.optimizer
                .step(&self.params, &grads, lr)
                .map_err(fail)?;
            self.step += 1;
            on_log(&StepLog {
                step,
                lr,
                object_loss: object_sum / batch as f64,
                relationship_loss: relationship_sum / batch as f64,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::{BoxF, Triplet};
    use crate::model::{HlnConfig, HlnModel};
    use crate::scenes::{generate_dataset, simulate_detector, DatasetConfig};
    use alloc::vec;

    fn tiny_model_config() -> HlnConfig {
        HlnConfig {
            visual_dim: 8,
            d_emb: 6,
            d_model: 12,
            heads: 2,
            transformer_layers: 1,
            or_gat_count: 1,
            use_hr_gat: true,
            ..HlnConfig::default()
        }
    }

    fn tiny_scenes(count: usize) -> Vec<TrainScene> {
        let dcfg = DatasetConfig {
            num_scenes: count,
            objects_min: 3,
            objects_max: 5,
            visual_dim: 8,
            ..DatasetConfig::default()
        };
        generate_dataset(&dcfg)
            .unwrap()
            .into_iter()
            .map(|r| {
                let det = simulate_detector(&r.graph, r.id, &dcfg);
                let inputs =
                    SceneInputs::from_detection(&det, r.graph.width, r.graph.height).unwrap();
                TrainScene {
                    graph: r.graph,
                    inputs,
                }
            })
            .collect()
    }

    #[test]
    fn schedule_warms_up_and_decays_exactly() {
        let cfg = OptimizerConfig {
            base_lr: 0.002,
            warmup_steps: 100,
            decay_milestones: vec![400, 700],
            total_steps: 1000,
            ..OptimizerConfig::default()
        };
        cfg.validate().unwrap();
        assert_eq!(learning_rate(&cfg, 0), 0.0);
        assert_eq!(learning_rate(&cfg, 50), 0.002 * 0.5);
        assert_eq!(learning_rate(&cfg, 100), 0.002);
        assert_eq!(learning_rate(&cfg, 399), 0.002);
        // Exact multiplicative drops at the milestones.
        assert_eq!(learning_rate(&cfg, 400), learning_rate(&cfg, 399) * 0.1);
        assert_eq!(learning_rate(&cfg, 699), learning_rate(&cfg, 400));
        assert_eq!(learning_rate(&cfg, 700), learning_rate(&cfg, 699) * 0.1);
        assert_eq!(learning_rate(&cfg, 999), learning_rate(&cfg, 700));
    }

    #[test]
    fn optimizer_config_validation() {
        let mut cfg = OptimizerConfig::default();
        cfg.decay_milestones = vec![500, 500];
        assert!(cfg.validate().is_err());
        let mut cfg = OptimizerConfig::default();
        cfg.decay_milestones = vec![2500];
        assert!(cfg.validate().is_err());
        let mut cfg = OptimizerConfig::default();
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = OptimizerConfig::default();
        cfg.warmup_steps = 2000;
        assert!(cfg.validate().is_err());
        OptimizerConfig::default().validate().unwrap();
    }

    #[test]
    fn sgd_momentum_matches_hand_computation() {
        let p = Parameter::new("w", &[2], vec![1.0, 2.0]).unwrap();
        let mut grads_map = alloc::collections::BTreeMap::new();
        grads_map.insert(String::from("w"), (vec![2usize], vec![1.0, -0.5]));
        let grads = Gradients::from_entries(grads_map);
        let mut opt = SgdMomentum::new(0.9);
        let params = [p.clone()];
        let lr = 0.1;
        opt.step(&params, &grads, lr).unwrap();
        // v1 = g; w1 = w0 - lr*g.
        assert_eq!(p.to_tensor().data().to_vec(), vec![1.0 - 0.1, 2.0 + 0.05]);
        opt.step(&params, &grads, lr).unwrap();
        // v2 = 0.9*g + g = 1.9*g.
        assert_eq!(
            p.to_tensor().data().to_vec(),
            vec![1.0 - 0.1 - 0.1 * 1.9, 2.0 + 0.05 + 0.1 * 0.95]
        );
    }

    #[test]
    fn frozen_parameters_are_not_updated() {
        let p = Parameter::frozen("locked", &[1], vec![5.0]).unwrap();
        let mut grads_map = alloc::collections::BTreeMap::new();
        grads_map.insert(String::from("locked"), (vec![1usize], vec![1.0]));
        let grads = Gradients::from_entries(grads_map);
        let mut opt = SgdMomentum::new(0.9);
        opt.step(&[p.clone()], &grads, 0.5).unwrap();
        assert_eq!(p.to_tensor().data().to_vec(), vec![5.0]);
    }

    #[test]
    fn sampling_uses_all_pairs_in_small_scenes() {
        let scenes = tiny_scenes(3);
        let graph = &scenes[0].graph;
        let n = graph.boxes.len();
        let mut rng = crate::rng::stream_rng(1, DOMAIN_TRAIN_STEP, 0);
        let batch = sample_relationships(graph, 8, &mut rng, 256, 0.25);
        assert_eq!(batch.pairs.len(), n * (n - 1));
        assert_eq!(batch.pairs, ordered_pairs(n));
        // Targets match ground truth.
        for (row, &(i, j)) in batch.pairs.iter().enumerate() {
            for p in 0..8 {
                let expect = graph
                    .triplets
                    .iter()
                    .any(|t| t.subject == i && t.object == j && t.predicate == p);
                assert_eq!(batch.targets[row * 8 + p] == 1.0, expect);
            }
        }
    }

    #[test]
    fn sampling_caps_positives_and_fills_with_negatives() {
        // Hand-built graph: 4 objects, 12 ordered pairs, exactly 4 of them
        // positive, so the cap and the negative fill are both exercised.
        let b = |x: f64| BoxF {
            x1: x,
            y1: 10.0,
            x2: x + 50.0,
            y2: 60.0,
        };
        let graph = SceneGraph {
            width: 400.0,
            height: 400.0,
            boxes: alloc::vec![b(0.0), b(100.0), b(200.0), b(300.0)],
            categories: alloc::vec![1, 2, 3, 4],
            triplets: alloc::vec![
                Triplet { subject: 0, predicate: 0, object: 1 },
                Triplet { subject: 1, predicate: 1, object: 2 },
                Triplet { subject: 2, predicate: 0, object: 3 },
                Triplet { subject: 3, predicate: 1, object: 0 },
            ],
        };
        let graph = &graph;
        let mut rng = crate::rng::stream_rng(2, DOMAIN_TRAIN_STEP, 0);
        let batch = sample_relationships(graph, 8, &mut rng, 8, 0.25);
        assert_eq!(batch.pairs.len(), 8);
        let positives = batch
            .pairs
            .iter()
            .filter(|&&(i, j)| {
                graph
                    .triplets
                    .iter()
                    .any(|t| t.subject == i && t.object == j)
            })
            .count();
        // ceil(0.25 * 8) = 2 positives, remainder negatives.
        assert_eq!(positives, 2);
        // Canonical ordering of the selected pairs.
        let n = graph.boxes.len();
        let flat: Vec<usize> = batch
            .pairs
            .iter()
            .map(|&(i, j)| crate::hypergraph::pair_index(n, i, j))
            .collect();
        assert!(flat.windows(2).all(|w| w[0] < w[1]));
        // Deterministic under the same stream.
        let mut rng2 = crate::rng::stream_rng(2, DOMAIN_TRAIN_STEP, 0);
        let batch2 = sample_relationships(graph, 8, &mut rng2, 8, 0.25);
        assert_eq!(batch, batch2);
    }

    #[test]
    fn scene_without_positives_samples_only_negatives() {
        let scenes = tiny_scenes(1);
        let mut graph = scenes[0].graph.clone();
        graph.triplets.clear();
        let mut rng = crate::rng::stream_rng(3, DOMAIN_TRAIN_STEP, 0);
        let n = graph.boxes.len();
        let batch = sample_relationships(&graph, 8, &mut rng, 6.min(n * (n - 1)), 0.25);
        assert!(batch.targets.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn single_step_decreases_loss_on_fixed_batch() {
        let model = HlnModel::new(&tiny_model_config(), 5).unwrap();
        let scenes = tiny_scenes(2);
        let cfg = OptimizerConfig {
            base_lr: 1e-2,
            warmup_steps: 1,
            decay_milestones: vec![],
            total_steps: 10,
            batch_size: 2,
            ..OptimizerConfig::default()
        };
        // Fixed batch: both scenes, full pair sets.
        let c_p = 8;
        let batch_loss = |g: &Graph| -> f64 {
            let mut sum = 0.0;
            for scene in &scenes {
                let mut rng = crate::rng::stream_rng(9, DOMAIN_TRAIN_STEP, 0);
                let sample = sample_relationships(&scene.graph, c_p, &mut rng, 256, 0.25);
                let targets =
                    Tensor::from_vec(&[sample.pairs.len(), c_p], sample.targets.clone()).unwrap();
                sum += self_loss(&model, g, scene, &sample.pairs, &targets);
            }
            sum
        };
        fn self_loss(
            model: &HlnModel,
            g: &Graph,
            scene: &TrainScene,
            pairs: &[(usize, usize)],
            targets: &Tensor,
        ) -> f64 {
            model
                .scene_loss(
                    g,
                    &scene.inputs,
                    &scene.graph.categories,
                    TaskMode::SgDet,
                    pairs,
                    targets,
                )
                .unwrap()
                .total
                .item()
                .unwrap()
        }
        let before = batch_loss(&Graph::inference());
        // One optimization step over the same fixed batch.
        let g = Graph::recording();
        let mut total: Option<Tensor> = None;
        for scene in &scenes {
            let mut rng = crate::rng::stream_rng(9, DOMAIN_TRAIN_STEP, 0);
            let sample = sample_relationships(&scene.graph, c_p, &mut rng, 256, 0.25);
            let targets =
                Tensor::from_vec(&[sample.pairs.len(), c_p], sample.targets.clone()).unwrap();
            let loss = model
                .scene_loss(
                    &g,
                    &scene.inputs,
                    &scene.graph.categories,
                    TaskMode::SgDet,
                    &sample.pairs,
                    &targets,
                )
                .unwrap();
            total = Some(match total {
                None => loss.total,
                Some(t) => t.add(&loss.total).unwrap(),
            });
        }
        let grads = g.backward(&total.unwrap().scale(0.5).unwrap()).unwrap();
        let mut opt = SgdMomentum::new(cfg.momentum);
        opt.step(&model.parameters(), &grads, 1e-3).unwrap();
        let after = batch_loss(&Graph::inference());
        assert!(
            after < before,
            "one small step did not reduce the loss ({before} -> {after})"
        );
    }

    #[test]
    fn trainer_runs_and_resumes_bit_exactly() {
        let mcfg = tiny_model_config();
        let scenes = tiny_scenes(5);
        let cfg = OptimizerConfig {
            base_lr: 5e-3,
            warmup_steps: 2,
            decay_milestones: vec![4],
            total_steps: 6,
            batch_size: 2,
            ..OptimizerConfig::default()
        };

        // Fresh run: all six steps.
        let model_a = HlnModel::new(&mcfg, 21).unwrap();
        let mut trainer_a = Trainer::new(&model_a, cfg.clone(), 77, TaskMode::SgDet).unwrap();
        let mut logs_a = Vec::new();
        trainer_a
            .run_steps(&scenes, 6, |l| logs_a.push(l.clone()))
            .unwrap();

        // Interrupted run: three steps, snapshot, restore into a fresh
        // model, three more.
        let model_b = HlnModel::new(&mcfg, 21).unwrap();
        let mut trainer_b = Trainer::new(&model_b, cfg.clone(), 77, TaskMode::SgDet).unwrap();
        let mut logs_b = Vec::new();
        trainer_b
            .run_steps(&scenes, 3, |l| logs_b.push(l.clone()))
            .unwrap();
        let snapshot_state = trainer_b.state();
        let snapshot_params: Vec<(String, Vec<f64>)> = model_b
            .parameters()
            .iter()
            .map(|p| (p.name(), p.to_tensor().data().to_vec()))
            .collect();

        let model_c = HlnModel::new(&mcfg, 21).unwrap();
        for p in model_c.parameters() {
            let (_, values) = snapshot_params
                .iter()
                .find(|(n, _)| *n == p.name())
                .unwrap();
            p.set_value(values.clone()).unwrap();
        }
        let mut trainer_c = Trainer::new(&model_c, cfg, 77, TaskMode::SgDet).unwrap();
        trainer_c.restore(snapshot_state);
        assert_eq!(trainer_c.step_count(), 3);
        trainer_c
            .run_steps(&scenes, 3, |l| logs_b.push(l.clone()))
            .unwrap();

        assert_eq!(logs_a, logs_b);
        for (pa, pc) in model_a.parameters().iter().zip(model_c.parameters().iter()) {
            assert_eq!(pa.name(), pc.name());
            assert_eq!(
                pa.to_tensor().data(),
                pc.to_tensor().data(),
                "parameter {} diverged after resume",
                pa.name()
            );
        }
        // Schedule conformance surfaces in the logs.
        assert_eq!(logs_a[0].lr, 0.0);
        assert_eq!(logs_a[2].lr, 5e-3);
        assert_eq!(logs_a[4].lr, logs_a[3].lr * 0.1);
        // Losses are finite throughout.
        assert!(logs_a
            .iter()
            .all(|l| l.object_loss.is_finite() && l.relationship_loss.is_finite()));
    }

    #[test]
    fn trainer_rejects_empty_dataset() {
        let model = HlnModel::new(&tiny_model_config(), 3).unwrap();
        let mut trainer =
            Trainer::new(&model, OptimizerConfig::default(), 1, TaskMode::SgDet).unwrap();
        assert_eq!(
            trainer.run_steps(&[], 1, |_| {}),
            Err(TrainError::EmptyDataset)
        );
    }
}
