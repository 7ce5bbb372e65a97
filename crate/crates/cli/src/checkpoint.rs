//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "HLNCKPT\0"
//! version u32
//! params  u32 count, then per parameter:
//!           u32 name length, name bytes (UTF-8),
//!           u32 rank, rank × u64 dims,
//!           numel × f64 payload
//! trainer u64 step
//!         u32 velocity count, then per entry:
//!           u32 name length, name bytes,
//!           u64 length, length × f64 payload
//! ```
//!
//! Floats are stored as raw IEEE-754 bits, so save → load round-trips
//! bit-exactly and a resumed run continues from identical state.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use hln_core::tensor::Parameter;
use hln_core::train::TrainerState;

pub const MAGIC: [u8; 8] = *b"HLNCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (this build reads version {VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("corrupt checkpoint: {details}")]
    Corrupt { details: String },
    #[error(
        "checkpoint (version {version}) does not fit the model: parameter `{name}`: {details}"
    )]
    ParamMismatch {
        version: u32,
        name: String,
        details: String,
    },
}

/// In-memory image of a checkpoint file.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// `(name, dims, values)` per parameter, in file order.
    pub params: Vec<(String, Vec<usize>, Vec<f64>)>,
    pub trainer: TrainerState,
}

impl Checkpoint {
    /// Captures the current values of `params` plus trainer progress.
    pub fn capture(params: &[Parameter], trainer: TrainerState) -> Self {
        Self {
            params: params
                .iter()
                .map(|p| (p.name(), p.shape(), p.to_tensor().data().to_vec()))
                .collect(),
            trainer,
        }
    }

    /// Writes the values back into a freshly built model's parameters.
    /// Every model parameter must appear in the checkpoint with matching
    /// dimensions, and the checkpoint must not carry extras.
    pub fn apply(&self, params: &[Parameter]) -> Result<(), CheckpointError> {
        let mismatch = |name: &str, details: String| CheckpointError::ParamMismatch {
            version: VERSION,
            name: String::from(name),
            details,
        };
        if self.params.len() != params.len() {
            return Err(CheckpointError::Corrupt {
                details: format!(
                    "checkpoint has {} parameters but the model has {} \
                     (was the checkpoint trained with a different preset or configuration?)",
                    self.params.len(),
                    params.len()
                ),
            });
        }
        for p in params {
            let name = p.name();
            let Some((_, dims, values)) = self.params.iter().find(|(n, _, _)| *n == name)
            else {
                return Err(mismatch(&name, String::from("missing from checkpoint")));
            };
            if *dims != p.shape() {
                return Err(mismatch(
                    &name,
                    format!("checkpoint shape {dims:?} but model shape {:?}", p.shape()),
                ));
            }
            p.set_value(values.clone())
                .map_err(|e| mismatch(&name, e.to_string()))?;
        }
        Ok(())
    }
}

pub fn save(path: &Path, checkpoint: &Checkpoint) -> Result<(), CheckpointError> {
    let io_err = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(io_err);

    put(&MAGIC)?;
    put(&VERSION.to_le_bytes())?;
    put(&(checkpoint.params.len() as u32).to_le_bytes())?;
    for (name, dims, values) in &checkpoint.params {
        put(&(name.len() as u32).to_le_bytes())?;
        put(name.as_bytes())?;
        put(&(dims.len() as u32).to_le_bytes())?;
        for &d in dims {
            put(&(d as u64).to_le_bytes())?;
        }
        for &v in values {
            put(&v.to_le_bytes())?;
        }
    }
    put(&(checkpoint.trainer.step as u64).to_le_bytes())?;
    put(&(checkpoint.trainer.velocities.len() as u32).to_le_bytes())?;
    for (name, values) in &checkpoint.trainer.velocities {
        put(&(name.len() as u32).to_le_bytes())?;
        put(name.as_bytes())?;
        put(&(values.len() as u64).to_le_bytes())?;
        for &v in values {
            put(&v.to_le_bytes())?;
        }
    }
    w.flush().map_err(io_err)
}

struct Cursor<R> {
    inner: R,
    path: String,
}

impl<R: Read> Cursor<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>, CheckpointError> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::UnexpectedEof => CheckpointError::Corrupt {
                    details: String::from("file ends mid-record"),
                },
                _ => CheckpointError::Io {
                    path: self.path.clone(),
                    source: e,
                },
            })?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>, CheckpointError> {
        let raw = self.bytes(count * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn name(&mut self) -> Result<String, CheckpointError> {
        let len = self.u32()? as usize;
        if len > 1 << 16 {
            return Err(CheckpointError::Corrupt {
                details: format!("implausible name length {len}"),
            });
        }
        String::from_utf8(self.bytes(len)?).map_err(|_| CheckpointError::Corrupt {
            details: String::from("parameter name is not UTF-8"),
        })
    }
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let path_str = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| CheckpointError::Io {
        path: path_str.clone(),
        source,
    })?;
    let mut c = Cursor {
        inner: BufReader::new(file),
        path: path_str,
    };

    if c.bytes(8)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion { found: version });
    }
    let param_count = c.u32()? as usize;
    let mut params = Vec::with_capacity(param_count);
    for _ in 0..param_count {
        let name = c.name()?;
        let rank = c.u32()? as usize;
        if rank > 8 {
            return Err(CheckpointError::Corrupt {
                details: format!("implausible rank {rank} for `{name}`"),
            });
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(c.u64()? as usize);
        }
        let numel: usize = dims.iter().product();
        let values = c.f64s(numel)?;
        params.push((name, dims, values));
    }
    let step = c.u64()? as usize;
    let velocity_count = c.u32()? as usize;
    let mut velocities = Vec::with_capacity(velocity_count);
    for _ in 0..velocity_count {
        let name = c.name()?;
        let len = c.u64()? as usize;
        velocities.push((name, c.f64s(len)?));
    }
    Ok(Checkpoint {
        params,
        trainer: TrainerState { step, velocities },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use hln_core::model::{HlnConfig, HlnModel};

    fn small_model() -> HlnModel {
        HlnModel::new(
            &HlnConfig {
                visual_dim: 8,
                d_emb: 6,
                d_model: 12,
                heads: 2,
                transformer_layers: 1,
                ..HlnConfig::default()
            },
            11,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.bin");
        let model = small_model();
        let params = model.parameters();
        let trainer = TrainerState {
            step: 42,
            velocities: vec![
                (params[0].name(), vec![0.5; params[0].numel()]),
                (params[1].name(), vec![-0.25; params[1].numel()]),
            ],
        };
        let original = Checkpoint::capture(&params, trainer);
        save(&path, &original).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(original, loaded);

        // Saving the loaded image reproduces the file bytes.
        let path2 = dir.path().join("checkpoint2.bin");
        save(&path2, &loaded).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn apply_restores_parameter_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.bin");
        let model = small_model();
        let params = model.parameters();
        // Perturb, capture, perturb again, then restore from file.
        params[0].add_scaled(&vec![1.0; params[0].numel()], 0.01).unwrap();
        let snapshot = Checkpoint::capture(
            &params,
            TrainerState {
                step: 0,
                velocities: vec![],
            },
        );
        save(&path, &snapshot).unwrap();
        let expected = params[0].to_tensor().data().to_vec();
        params[0].add_scaled(&vec![1.0; params[0].numel()], 0.5).unwrap();
        load(&path).unwrap().apply(&params).unwrap();
        assert_eq!(params[0].to_tensor().data().to_vec(), expected);
    }

    #[test]
    fn shape_mismatch_names_the_parameter() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.bin");
        let model = small_model();
        let params = model.parameters();
        let mut snapshot = Checkpoint::capture(
            &params,
            TrainerState {
                step: 0,
                velocities: vec![],
            },
        );
        // Corrupt one parameter's dims.
        snapshot.params[3].1 = vec![1, 1];
        snapshot.params[3].2 = vec![0.0];
        save(&path, &snapshot).unwrap();
        let err = load(&path).unwrap().apply(&params).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(&snapshot.params[3].0), "{msg}");
        assert!(msg.contains("version 1"), "{msg}");
    }

    #[test]
    fn bad_magic_and_truncation_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.bin");
        std::fs::write(&path, b"NOTACKPT").unwrap();
        assert!(matches!(load(&path), Err(CheckpointError::BadMagic)));

        let model = small_model();
        let snapshot = Checkpoint::capture(
            &model.parameters(),
            TrainerState {
                step: 0,
                velocities: vec![],
            },
        );
        save(&path, &snapshot).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() / 2);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load(&path),
            Err(CheckpointError::Corrupt { .. })
        ));
    }
}
