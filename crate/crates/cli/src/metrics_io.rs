//! Metric report files: a JSON document with stable key order plus a flat
//! CSV table for plotting. Both are pure functions of the metric values, so
//! identical evaluations produce identical bytes.

use std::path::Path;

use anyhow::{Context, Result};
use hln_core::eval::{MetricsReport, RecallSummary, K_GRID};
use hln_core::scenes::PREDICATE_NAMES;
use serde::{Deserialize, Serialize};

/// One constraint mode's numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionDocument {
    #[serde(rename = "R@20")]
    pub r_at_20: f64,
    #[serde(rename = "R@50")]
    pub r_at_50: f64,
    #[serde(rename = "R@100")]
    pub r_at_100: f64,
    #[serde(rename = "mR@20")]
    pub mr_at_20: f64,
    #[serde(rename = "mR@50")]
    pub mr_at_50: f64,
    #[serde(rename = "mR@100")]
    pub mr_at_100: f64,
    /// Arithmetic mean of mR@50, mR@100, R@50, R@100.
    pub mean: f64,
    /// Per-predicate R@100 ordered by descending training-split frequency;
    /// `recall` is null for predicates absent from the evaluated split.
    pub per_predicate_r_at_100: Vec<PredicateRecall>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateRecall {
    pub predicate: String,
    pub recall: Option<f64>,
}

/// The full evaluation report as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub task_mode: String,
    pub split: String,
    pub num_scenes: usize,
    pub with_constraint: SectionDocument,
    pub without_constraint: SectionDocument,
}

fn section(summary: &RecallSummary, frequency_order: &[usize]) -> SectionDocument {
    SectionDocument {
        r_at_20: summary.recall[&K_GRID[0]],
        r_at_50: summary.recall[&K_GRID[1]],
        r_at_100: summary.recall[&K_GRID[2]],
        mr_at_20: summary.mean_recall[&K_GRID[0]],
        mr_at_50: summary.mean_recall[&K_GRID[1]],
        mr_at_100: summary.mean_recall[&K_GRID[2]],
        mean: summary.headline_mean(),
        per_predicate_r_at_100: frequency_order
            .iter()
            .map(|&p| PredicateRecall {
                predicate: String::from(PREDICATE_NAMES[p]),
                recall: summary.per_predicate_at_100[p],
            })
            .collect(),
    }
}

pub fn metrics_document(
    report: &MetricsReport,
    task_mode: &str,
    split: &str,
    num_scenes: usize,
) -> MetricsDocument {
    MetricsDocument {
        task_mode: String::from(task_mode),
        split: String::from(split),
        num_scenes,
        with_constraint: section(&report.with_constraint, &report.predicate_frequency_order),
        without_constraint: section(
            &report.without_constraint,
            &report.predicate_frequency_order,
        ),
    }
}

pub fn render_json(doc: &MetricsDocument) -> String {
    let mut text = serde_json::to_string_pretty(doc).expect("metrics document serializes");
    text.push('\n');
    text
}

/// Flat `section,metric,value` table. Absent per-predicate recalls carry the
/// explicit marker `absent`.
pub fn render_csv(doc: &MetricsDocument) -> String {
    let mut out = String::from("section,metric,value\n");
    let mut push = |section: &str, metric: &str, value: String| {
        out.push_str(section);
        out.push(',');
        out.push_str(metric);
        out.push(',');
        out.push_str(&value);
        out.push('\n');
    };
    for (name, s) in [
        ("with_constraint", &doc.with_constraint),
        ("without_constraint", &doc.without_constraint),
    ] {
        push(name, "R@20", s.r_at_20.to_string());
        push(name, "R@50", s.r_at_50.to_string());
        push(name, "R@100", s.r_at_100.to_string());
        push(name, "mR@20", s.mr_at_20.to_string());
        push(name, "mR@50", s.mr_at_50.to_string());
        push(name, "mR@100", s.mr_at_100.to_string());
        push(name, "mean", s.mean.to_string());
        for pr in &s.per_predicate_r_at_100 {
            let metric = format!("per_predicate_R@100/{}", pr.predicate);
            let value = match pr.recall {
                Some(v) => v.to_string(),
                None => String::from("absent"),
            };
            push(name, &metric, value);
        }
    }
    out
}

/// Writes `metrics.json` and `metrics.csv` under `dir`.
pub fn write_metrics(dir: &Path, doc: &MetricsDocument) -> Result<()> {
    let json_path = dir.join("metrics.json");
    std::fs::write(&json_path, render_json(doc))
        .with_context(|| format!("cannot write {}", json_path.display()))?;
    let csv_path = dir.join("metrics.csv");
    std::fs::write(&csv_path, render_csv(doc))
        .with_context(|| format!("cannot write {}", csv_path.display()))?;
    Ok(())
}

pub fn read_metrics_json(path: &Path) -> Result<MetricsDocument> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid metrics file {}", path.display()))
}
