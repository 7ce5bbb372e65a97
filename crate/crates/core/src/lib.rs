//! Scene-graph generation with hyper-relationship attention.
//!
//! This crate implements a complete scene-graph-generation stack on top of a
//! self-contained reverse-mode automatic-differentiation engine:
//!
//! * [`hypergraph`] — typed scene-graph data model: boxes, category labels,
//!   relationship triplets, pair/mediator index algebra, spatial features.
//! * [`tensor`] — dense `f64` tensors with a gradient tape, the operation set
//!   needed by the models, and a central-difference gradient checker.
//! * [`nn`] — neural building blocks: linear layers, layer norm, multi-head
//!   attention, transformer encoder layers, embeddings.
//! * [`classifier`] — object classifier: fused visual/spatial/label-embedding
//!   input followed by a transformer encoder over the objects of a scene.
//! * [`predictor`] — relationship decoder: pairwise feature construction,
//!   object-relationship attention (OR-GAT), hyper-relationship attention
//!   (HR-GAT) over mediator objects, and the frequency-bias head.
//! * [`model`] — the assembled pipeline plus the ablation presets.
//! * [`scenes`] — deterministic synthetic scene benchmark with simulated
//!   detections and rule-derived relationship labels, including the
//!   transitive `resting_on` relation.
//! * [`eval`] — recall metric suite (R@K, mR@K, graph-constrained variants,
//!   per-predicate recall) over ranked triplet predictions.
//! * [`train`] — SGD with momentum, the warmup/step-decay schedule, scene
//!   batching, and the training loop.
//! * [`rng`] — seeded, stream-separated random number derivation so every
//!   stage is reproducible from a single root seed.
//!
//! The crate is `no_std`-compatible (requires `alloc`); the `std` feature
//! (default) only forwards to dependencies and enables nothing else.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod classifier;
pub mod eval;
pub mod hypergraph;
pub mod model;
pub mod nn;
pub mod predictor;
pub mod rng;
pub mod scenes;
pub mod tensor;
pub mod train;
