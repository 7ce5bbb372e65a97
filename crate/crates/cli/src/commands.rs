//! The four operator commands: generate, train, eval, infer.
//!
//! Each command is a pure function of its (resolved) configuration and the
//! files it reads, producing files under the output directory with fixed
//! names: `dataset.{train,val,test}`, `checkpoint.bin`,
//! `config.resolved.toml`, `train.log`, `metrics.json`, `metrics.csv`,
//! `scene_graph.json`. No output embeds timestamps, so identical inputs
//! yield identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use hln_core::eval::{
    predicate_counts, rank_triplets, MetricsReport, SceneEvaluation, IOU_THRESHOLD, K_GRID,
};
use hln_core::model::{HlnModel, SceneInputs, TaskMode};
use hln_core::scenes::{
    generate_dataset, simulate_detector, split_sizes, DatasetConfig, SceneRecord, SplitSizes,
    CATEGORY_NAMES, PREDICATE_NAMES,
};
use hln_core::tensor::Graph;
use hln_core::train::{StepLog, TrainScene, Trainer};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Checkpoint};
use crate::config::RunConfig;
use crate::dataset_io::{read_dataset, write_dataset};
use crate::metrics_io::{metrics_document, write_metrics, MetricsDocument};

pub const DATASET_FILES: [&str; 3] = ["dataset.train", "dataset.val", "dataset.test"];
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";
pub const TRAIN_LOG_FILE: &str = "train.log";
pub const SCENE_GRAPH_FILE: &str = "scene_graph.json";

/// Directory holding the dataset files for this run.
pub fn dataset_dir(config: &RunConfig, out: &Path) -> PathBuf {
    if config.dataset_dir.is_empty() {
        out.to_path_buf()
    } else {
        PathBuf::from(&config.dataset_dir)
    }
}

fn read_split(config: &RunConfig, out: &Path, split: &str) -> Result<Vec<SceneRecord>> {
    let dcfg = config.dataset_config();
    let path = dataset_dir(config, out).join(format!("dataset.{split}"));
    let records = read_dataset(&path, dcfg.num_categories(), dcfg.num_predicates())
        .with_context(|| format!("loading the {split} split"))?;
    Ok(records)
}

/// Builds the per-scene model inputs by regenerating detector outputs from
/// the dataset seed.
pub fn prepare_scenes(
    records: Vec<SceneRecord>,
    dcfg: &DatasetConfig,
) -> Result<Vec<TrainScene>> {
    records
        .into_iter()
        .map(|r| {
            let det = simulate_detector(&r.graph, r.id, dcfg);
            let inputs = SceneInputs::from_detection(&det, r.graph.width, r.graph.height)
                .with_context(|| format!("building inputs for scene {}", r.id))?;
            Ok(TrainScene {
                graph: r.graph,
                inputs,
            })
        })
        .collect()
}

/// Runs the full metric suite for `model` over prepared scenes.
pub fn evaluate_scenes(
    model: &HlnModel,
    scenes: &[TrainScene],
    mode: TaskMode,
    train_counts: &[u64],
) -> Result<MetricsReport> {
    let c_p = model.config().num_predicates;
    let g = Graph::inference();
    let mut with_scenes = Vec::with_capacity(scenes.len());
    let mut without_scenes = Vec::with_capacity(scenes.len());
    for scene in scenes {
        let n = scene.graph.num_objects();
        let pred = model
            .predict(&g, &scene.inputs, mode, Some(&scene.graph.categories))
            .with_context(|| "scoring a scene during evaluation")?;
        let scores = pred.pair_scores.data();
        for constrained in [true, false] {
            let ranked = rank_triplets(
                n,
                &pred.pair_queries,
                scores,
                c_p,
                &pred.labels,
                &scene.inputs.boxes,
                constrained,
            );
            let outcome =
                SceneEvaluation::from_ranked(&ranked, &scene.graph, mode, IOU_THRESHOLD);
            if constrained {
                with_scenes.push(outcome);
            } else {
                without_scenes.push(outcome);
            }
        }
    }
    let with_summary = hln_core::eval::summarize(&with_scenes, c_p, &K_GRID);
    let without_summary = hln_core::eval::summarize(&without_scenes, c_p, &K_GRID);
    Ok(MetricsReport::build(
        with_summary,
        without_summary,
        train_counts,
    ))
}

/// Outcome of `generate`.
#[derive(Debug, Clone)]
pub struct GenerateSummary {
    pub split: SplitSizes,
    pub predicate_totals: Vec<u64>,
    pub files: [PathBuf; 3],
}

impl GenerateSummary {
    /// Human-readable statistics lines (scene counts, then one line per
    /// predicate).
    pub fn statistics_lines(&self) -> Vec<String> {
        let mut lines = vec![format!(
            "scenes train={} val={} test={}",
            self.split.train, self.split.val, self.split.test
        )];
        for (p, name) in PREDICATE_NAMES.iter().enumerate() {
            lines.push(format!("predicate {name}: {}", self.predicate_totals[p]));
        }
        lines
    }
}

/// Generates the benchmark and writes the three split files.
pub fn cmd_generate(config: &RunConfig, out: &Path, force: bool) -> Result<GenerateSummary> {
    config.validate()?;
    let dcfg = config.dataset_config();
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))?;
    let files = DATASET_FILES.map(|f| out.join(f));
    if !force {
        for f in &files {
            ensure!(
                !f.exists(),
                "{} already exists; pass --force to overwrite",
                f.display()
            );
        }
    }
    let records = generate_dataset(&dcfg)?;
    let split = split_sizes(records.len());
    let predicate_totals =
        predicate_counts(records.iter().map(|r| &r.graph), dcfg.num_predicates());
    let (train, rest) = records.split_at(split.train);
    let (val, test) = rest.split_at(split.val);
    write_dataset(&files[0], train)?;
    write_dataset(&files[1], val)?;
    write_dataset(&files[2], test)?;
    Ok(GenerateSummary {
        split,
        predicate_totals,
        files,
    })
}

/// Outcome of `train`.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub steps_run: usize,
    pub final_train_loss: Option<(f64, f64)>,
    pub checkpoint_path: PathBuf,
    pub log_path: PathBuf,
}

fn format_step_line(log: &StepLog) -> String {
    format!(
        "step {} lr {} obj_loss {} rel_loss {}",
        log.step, log.lr, log.object_loss, log.relationship_loss
    )
}

fn format_val_line(step: usize, report: &MetricsReport) -> String {
    let s = &report.without_constraint;
    format!(
        "val step {} mR@50 {} R@50 {} mR@100 {} R@100 {}",
        step, s.mean_recall[&50], s.recall[&50], s.mean_recall[&100], s.recall[&100]
    )
}

/// Trains a model from the configured dataset and writes the checkpoint,
/// the resolved configuration and the training log. `verbose` echoes
/// progress to stdout; the log file always records every step.
pub fn cmd_train(config: &RunConfig, out: &Path, verbose: bool) -> Result<TrainOutcome> {
    config.validate()?;
    let mode = config.task_mode()?;
    let dcfg = config.dataset_config();
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))?;

    let train_records = read_split(config, out, "train")?;
    ensure!(!train_records.is_empty(), "training split is empty");
    let val_records = read_split(config, out, "val")?;
    let train_counts = predicate_counts(
        train_records.iter().map(|r| &r.graph),
        dcfg.num_predicates(),
    );
    let train_scenes = prepare_scenes(train_records, &dcfg)?;
    let val_scenes = prepare_scenes(val_records, &dcfg)?;

    let model = HlnModel::new(&config.model_config()?, config.model_seed)?;
    model.fit_frequency_bias(train_scenes.iter().map(|s| &s.graph))?;

    let ocfg = config.optimizer_config();
    let total = ocfg.total_steps;
    let mut trainer = Trainer::new(&model, ocfg, config.model_seed, mode)?;

    let mut log = String::new();
    let mut last_losses = None;
    let echo_every = config.echo_interval.max(1);
    while trainer.step_count() < total {
        let remaining = total - trainer.step_count();
        let chunk = if config.val_interval > 0 {
            config.val_interval.min(remaining)
        } else {
            remaining
        };
        trainer.run_steps(&train_scenes, chunk, |l| {
            let line = format_step_line(l);
            log.push_str(&line);
            log.push('\n');
            if verbose && (l.step % echo_every == 0 || l.step + 1 == total) {
                println!("{line}");
            }
            last_losses = Some((l.object_loss, l.relationship_loss));
        })?;
        let at_end = trainer.step_count() >= total;
        if !val_scenes.is_empty() && (config.val_interval > 0 || at_end) {
            let report = evaluate_scenes(&model, &val_scenes, mode, &train_counts)?;
            let line = format_val_line(trainer.step_count(), &report);
            log.push_str(&line);
            log.push('\n');
            if verbose {
                println!("{line}");
            }
        }
    }

    let log_path = out.join(TRAIN_LOG_FILE);
    std::fs::write(&log_path, &log)
        .with_context(|| format!("cannot write {}", log_path.display()))?;
    let checkpoint_path = out.join(CHECKPOINT_FILE);
    checkpoint::save(
        &checkpoint_path,
        &Checkpoint::capture(&model.parameters(), trainer.state()),
    )?;
    let config_path = out.join(RESOLVED_CONFIG_FILE);
    std::fs::write(&config_path, config.to_toml())
        .with_context(|| format!("cannot write {}", config_path.display()))?;
    Ok(TrainOutcome {
        steps_run: trainer.step_count(),
        final_train_loss: last_losses,
        checkpoint_path,
        log_path,
    })
}

/// Builds the model described by `config` and loads the checkpoint from
/// `out` into it.
pub fn load_model(config: &RunConfig, out: &Path) -> Result<HlnModel> {
    let model = HlnModel::new(&config.model_config()?, config.model_seed)?;
    let path = out.join(CHECKPOINT_FILE);
    let ckpt = checkpoint::load(&path)
        .with_context(|| format!("loading checkpoint {}", path.display()))?;
    ckpt.apply(&model.parameters())?;
    Ok(model)
}

/// Evaluates the checkpoint in `out` on the configured split and writes
/// `metrics.json` / `metrics.csv`.
pub fn cmd_eval(config: &RunConfig, out: &Path) -> Result<MetricsDocument> {
    config.validate()?;
    let mode = config.task_mode()?;
    let dcfg = config.dataset_config();
    let train_records = read_split(config, out, "train")?;
    let train_counts = predicate_counts(
        train_records.iter().map(|r| &r.graph),
        dcfg.num_predicates(),
    );
    let eval_records = if config.eval_split == "train" {
        train_records
    } else {
        read_split(config, out, &config.eval_split)?
    };
    let num_scenes = eval_records.len();
    let scenes = prepare_scenes(eval_records, &dcfg)?;
    let model = load_model(config, out)?;
    let report = evaluate_scenes(&model, &scenes, mode, &train_counts)?;
    let doc = metrics_document(&report, mode.name(), &config.eval_split, num_scenes);
    write_metrics(out, &doc)?;
    Ok(doc)
}

/// One exported relationship of an inferred scene graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedRelationship {
    pub rank: usize,
    pub subject: usize,
    pub subject_category: String,
    pub predicate: String,
    pub object: usize,
    pub object_category: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedObject {
    pub id: usize,
    pub category: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
}

/// The structured scene-graph export of `infer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferDocument {
    pub image_id: u64,
    pub objects: Vec<ExportedObject>,
    pub relationships: Vec<ExportedRelationship>,
}

impl InferDocument {
    /// Human-readable edge list, one line per relationship.
    pub fn edge_lines(&self) -> Vec<String> {
        self.relationships
            .iter()
            .map(|r| {
                format!(
                    "{}#{} -[{}]-> {}#{} (score {:.4})",
                    r.subject_category, r.subject, r.predicate, r.object_category, r.object,
                    r.score
                )
            })
            .collect()
    }
}

/// Runs the model on a single stored scene and exports the ranked top-k
/// relationships.
pub fn cmd_infer(config: &RunConfig, out: &Path, scene_path: &Path) -> Result<InferDocument> {
    config.validate()?;
    let mode = config.task_mode()?;
    let dcfg = config.dataset_config();
    let records = read_dataset(scene_path, dcfg.num_categories(), dcfg.num_predicates())?;
    if records.len() != 1 {
        bail!(
            "{} holds {} scene records; infer expects exactly one",
            scene_path.display(),
            records.len()
        );
    }
    let record_id = records[0].id;
    let scenes = prepare_scenes(records, &dcfg)?;
    let scene = &scenes[0];
    let model = load_model(config, out)?;
    let g = Graph::inference();
    let pred = model.predict(&g, &scene.inputs, mode, Some(&scene.graph.categories))?;
    let n = scene.graph.num_objects();
    let ranked = rank_triplets(
        n,
        &pred.pair_queries,
        pred.pair_scores.data(),
        model.config().num_predicates,
        &pred.labels,
        &scene.inputs.boxes,
        config.infer_constraint,
    );
    let doc = InferDocument {
        image_id: record_id,
        objects: (0..n)
            .map(|i| ExportedObject {
                id: i,
                category: String::from(CATEGORY_NAMES[pred.labels[i] - 1]),
                bbox: [
                    scene.inputs.boxes[i].x1,
                    scene.inputs.boxes[i].y1,
                    scene.inputs.boxes[i].x2,
                    scene.inputs.boxes[i].y2,
                ],
            })
            .collect(),
        relationships: ranked
            .iter()
            .take(config.infer_top_k)
            .enumerate()
            .map(|(rank, t)| ExportedRelationship {
                rank,
                subject: t.subject,
                subject_category: String::from(CATEGORY_NAMES[t.subject_category - 1]),
                predicate: String::from(PREDICATE_NAMES[t.predicate]),
                object: t.object,
                object_category: String::from(CATEGORY_NAMES[t.object_category - 1]),
                score: t.score,
            })
            .collect(),
    };
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))?;
    let path = out.join(SCENE_GRAPH_FILE);
    let mut json = serde_json::to_string_pretty(&doc).expect("infer document serializes");
    json.push('\n');
    std::fs::write(&path, json).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(doc)
}

/// Parses one `step …` line of a training log.
pub fn parse_step_line(line: &str) -> Option<StepLog> {
    let mut tokens = line.split_whitespace();
    if tokens.next()? != "step" {
        return None;
    }
    let step = tokens.next()?.parse().ok()?;
    let mut lr = None;
    let mut obj = None;
    let mut rel = None;
    while let (Some(key), Some(value)) = (tokens.next(), tokens.next()) {
        let value: f64 = value.parse().ok()?;
        match key {
            "lr" => lr = Some(value),
            "obj_loss" => obj = Some(value),
            "rel_loss" => rel = Some(value),
            _ => return None,
        }
    }
    Some(StepLog {
        step,
        lr: lr?,
        object_loss: obj?,
        relationship_loss: rel?,
    })
}

/// Formats the headline numbers of a metrics document for the console.
pub fn summarize_document(doc: &MetricsDocument) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} on {} ({} scenes)",
        doc.task_mode, doc.split, doc.num_scenes
    );
    for (name, s) in [
        ("with constraint   ", &doc.with_constraint),
        ("without constraint", &doc.without_constraint),
    ] {
        let _ = writeln!(
            out,
            "{name}  mR@50 {:.4}  mR@100 {:.4}  R@50 {:.4}  R@100 {:.4}  mean {:.4}",
            s.mr_at_50, s.mr_at_100, s.r_at_50, s.r_at_100, s.mean
        );
    }
    out
}
