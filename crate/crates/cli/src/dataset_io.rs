//! Dataset files: line-delimited records, one scene per line, UTF-8.
//!
//! Each line is a JSON object with stable field order — image meta, objects
//! (box, category id), ground-truth triplets. Detector outputs are never
//! stored; they are regenerated from the dataset seed at load time, so the
//! files stay small and `read(write(x)) = x` holds exactly.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use hln_core::hypergraph::{BoxF, SceneGraph, Triplet};
use hln_core::scenes::SceneRecord;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DatasetIoError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed scene record: {details}")]
    Parse {
        path: String,
        line: usize,
        details: String,
    },
    #[error("{path}:{line}: invalid scene: {details}")]
    Invalid {
        path: String,
        line: usize,
        details: String,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneLine {
    id: u64,
    width: f64,
    height: f64,
    objects: Vec<ObjectLine>,
    /// `[subject, predicate, object]` index triplets.
    triplets: Vec<[usize; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectLine {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    category: usize,
}

fn to_line(record: &SceneRecord) -> SceneLine {
    SceneLine {
        id: record.id,
        width: record.graph.width,
        height: record.graph.height,
        objects: record
            .graph
            .boxes
            .iter()
            .zip(record.graph.categories.iter())
            .map(|(b, &category)| ObjectLine {
                bbox: [b.x1, b.y1, b.x2, b.y2],
                category,
            })
            .collect(),
        triplets: record
            .graph
            .triplets
            .iter()
            .map(|t| [t.subject, t.predicate, t.object])
            .collect(),
    }
}

fn from_line(line: SceneLine) -> SceneRecord {
    SceneRecord {
        id: line.id,
        graph: SceneGraph {
            width: line.width,
            height: line.height,
            boxes: line
                .objects
                .iter()
                .map(|o| BoxF::new(o.bbox[0], o.bbox[1], o.bbox[2], o.bbox[3]))
                .collect(),
            categories: line.objects.iter().map(|o| o.category).collect(),
            triplets: line
                .triplets
                .iter()
                .map(|&[s, p, o]| Triplet::new(s, p, o))
                .collect(),
        },
    }
}

/// Writes one file for a split. An empty split produces an empty file.
pub fn write_dataset(path: &Path, scenes: &[SceneRecord]) -> Result<(), DatasetIoError> {
    let io_err = |source| DatasetIoError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    for record in scenes {
        let json = serde_json::to_string(&to_line(record)).expect("scene record serializes");
        out.write_all(json.as_bytes()).map_err(io_err)?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Reads a split file, validating every scene against the benchmark
/// vocabulary sizes. Errors carry the 1-based line number.
pub fn read_dataset(
    path: &Path,
    num_categories: usize,
    num_predicates: usize,
) -> Result<Vec<SceneRecord>, DatasetIoError> {
    let path_str = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| DatasetIoError::Io {
        path: path_str.clone(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);
    let mut scenes = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let text = line.map_err(|source| DatasetIoError::Io {
            path: path_str.clone(),
            source,
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let parsed: SceneLine =
            serde_json::from_str(&text).map_err(|e| DatasetIoError::Parse {
                path: path_str.clone(),
                line: line_no,
                details: e.to_string(),
            })?;
        let record = from_line(parsed);
        record
            .graph
            .validate(num_categories, num_predicates)
            .map_err(|e| DatasetIoError::Invalid {
                path: path_str.clone(),
                line: line_no,
                details: e.to_string(),
            })?;
        scenes.push(record);
    }
    Ok(scenes)
}
