//! Flat key-value run configuration.
//!
//! One TOML file drives every command: dataset generation, model shape,
//! optimization, evaluation and inference. All keys are top level scalars
//! (plus one integer array for the decay milestones), every key has a
//! default, and unknown keys are rejected so typos fail fast. `train`
//! writes the fully resolved configuration next to its checkpoint; `eval`
//! and `infer` can consume that file verbatim.

use std::path::Path;

use anyhow::{bail, Context, Result};
use hln_core::model::{HlnConfig, Preset, TaskMode};
use hln_core::nn::MaskMode;
use hln_core::scenes::DatasetConfig;
use hln_core::train::OptimizerConfig;
use serde::{Deserialize, Serialize};

/// Every knob of a run. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    // Task.
    pub task_mode: String,
    /// Ablation preset; empty means "use the explicit structure keys".
    pub preset: String,

    // Dataset generation and the simulated detector.
    pub dataset_seed: u64,
    pub num_scenes: usize,
    pub objects_min: usize,
    pub objects_max: usize,
    pub canvas_width: f64,
    pub canvas_height: f64,
    pub sigma_v: f64,
    pub tau: f64,
    pub jitter_frac: f64,
    pub visual_dim: usize,
    /// Directory holding `dataset.{train,val,test}`; empty means the
    /// command's `--out` directory.
    pub dataset_dir: String,

    // Model.
    pub model_seed: u64,
    pub d_emb: usize,
    pub d_model: usize,
    pub heads: usize,
    pub ffn_multiplier: usize,
    pub transformer_layers: usize,
    pub or_gat_count: usize,
    pub use_hr_gat: bool,
    pub use_frequency_bias: bool,
    pub mask_mode: String,
    pub include_endpoint_mediators: bool,
    pub ln_eps: f64,

    // Optimization.
    pub base_lr: f64,
    pub momentum: f64,
    pub warmup_steps: usize,
    pub decay_milestones: Vec<usize>,
    pub decay_factor: f64,
    pub total_steps: usize,
    pub batch_size: usize,
    pub sample_size: usize,
    pub max_positive_fraction: f64,
    /// Steps between validation metric lines; 0 disables periodic
    /// validation (a final validation still runs).
    pub val_interval: usize,
    /// Steps between progress lines echoed to stdout (the log file always
    /// records every step).
    pub echo_interval: usize,

    // Evaluation and inference.
    pub eval_split: String,
    pub infer_top_k: usize,
    /// Whether inference keeps only the top predicate per pair.
    pub infer_constraint: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = DatasetConfig::default();
        let m = HlnConfig::default();
        let o = OptimizerConfig::default();
        Self {
            task_mode: String::from("sgdet"),
            preset: String::new(),
            dataset_seed: d.seed,
            num_scenes: d.num_scenes,
            objects_min: d.objects_min,
            objects_max: d.objects_max,
            canvas_width: d.canvas_width,
            canvas_height: d.canvas_height,
            sigma_v: d.sigma_v,
            tau: d.tau,
            jitter_frac: d.jitter_frac,
            visual_dim: d.visual_dim,
            dataset_dir: String::new(),
            model_seed: 1,
            d_emb: m.d_emb,
            d_model: m.d_model,
            heads: m.heads,
            ffn_multiplier: m.ffn_multiplier,
            transformer_layers: m.transformer_layers,
            or_gat_count: m.or_gat_count,
            use_hr_gat: m.use_hr_gat,
            use_frequency_bias: m.use_frequency_bias,
            mask_mode: String::from("additive"),
            include_endpoint_mediators: m.include_endpoint_mediators,
            ln_eps: m.ln_eps,
            base_lr: o.base_lr,
            momentum: o.momentum,
            warmup_steps: o.warmup_steps,
            decay_milestones: o.decay_milestones,
            decay_factor: o.decay_factor,
            total_steps: o.total_steps,
            batch_size: o.batch_size,
            sample_size: m.sample_size,
            max_positive_fraction: m.max_positive_fraction,
            val_interval: 500,
            echo_interval: 100,
            eval_split: String::from("test"),
            infer_top_k: 6,
            infer_constraint: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid run configuration")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        Self::from_toml(&text)
            .with_context(|| format!("in config file {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    /// Applies the command-line overrides: `--preset` replaces the preset
    /// key, and `--seed` replaces the seed that matters for the verb
    /// (`dataset_seed` for generate, `model_seed` otherwise).
    pub fn apply_overrides(
        &mut self,
        preset: Option<&str>,
        seed: Option<u64>,
        seed_governs_dataset: bool,
    ) {
        if let Some(p) = preset {
            self.preset = String::from(p);
        }
        if let Some(s) = seed {
            if seed_governs_dataset {
                self.dataset_seed = s;
            } else {
                self.model_seed = s;
            }
        }
    }

    /// Resolves the preset (if any) into the structure keys, so the
    /// written-back configuration is self-contained.
    pub fn resolve_preset(&mut self) -> Result<()> {
        if self.preset.is_empty() {
            return Ok(());
        }
        let Some(preset) = Preset::from_name(&self.preset) else {
            bail!(
                "unknown preset `{}` (expected hln-b, hln-o, hln-or or hln)",
                self.preset
            );
        };
        let mut model = self.model_config()?;
        preset.apply(&mut model);
        self.transformer_layers = model.transformer_layers;
        self.or_gat_count = model.or_gat_count;
        self.use_hr_gat = model.use_hr_gat;
        Ok(())
    }

    pub fn task_mode(&self) -> Result<TaskMode> {
        TaskMode::from_name(&self.task_mode)
            .with_context(|| format!("unknown task_mode `{}` (expected sgdet or precls)", self.task_mode))
    }

    pub fn mask_mode(&self) -> Result<MaskMode> {
        match self.mask_mode.as_str() {
            "additive" => Ok(MaskMode::Additive),
            "multiplicative" => Ok(MaskMode::Multiplicative),
            other => bail!("unknown mask_mode `{other}` (expected additive or multiplicative)"),
        }
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            seed: self.dataset_seed,
            num_scenes: self.num_scenes,
            objects_min: self.objects_min,
            objects_max: self.objects_max,
            canvas_width: self.canvas_width,
            canvas_height: self.canvas_height,
            sigma_v: self.sigma_v,
            tau: self.tau,
            jitter_frac: self.jitter_frac,
            visual_dim: self.visual_dim,
        }
    }

    pub fn model_config(&self) -> Result<HlnConfig> {
        Ok(HlnConfig {
            num_categories: self.dataset_config().num_categories(),
            num_predicates: self.dataset_config().num_predicates(),
            visual_dim: self.visual_dim,
            d_emb: self.d_emb,
            d_model: self.d_model,
            heads: self.heads,
            ffn_multiplier: self.ffn_multiplier,
            transformer_layers: self.transformer_layers,
            or_gat_count: self.or_gat_count,
            use_hr_gat: self.use_hr_gat,
            use_frequency_bias: self.use_frequency_bias,
            mask_mode: self.mask_mode()?,
            include_endpoint_mediators: self.include_endpoint_mediators,
            ln_eps: self.ln_eps,
            sample_size: self.sample_size,
            max_positive_fraction: self.max_positive_fraction,
        })
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            base_lr: self.base_lr,
            momentum: self.momentum,
            warmup_steps: self.warmup_steps,
            decay_milestones: self.decay_milestones.clone(),
            decay_factor: self.decay_factor,
            total_steps: self.total_steps,
            batch_size: self.batch_size,
        }
    }

    /// Full validation across all derived configurations.
    pub fn validate(&self) -> Result<()> {
        self.task_mode()?;
        if !self.preset.is_empty() && Preset::from_name(&self.preset).is_none() {
            bail!("unknown preset `{}`", self.preset);
        }
        self.dataset_config()
            .validate()
            .context("dataset configuration")?;
        self.model_config()?
            .validate()
            .context("model configuration")?;
        self.optimizer_config()
            .validate()
            .context("optimizer configuration")?;
        if !matches!(self.eval_split.as_str(), "train" | "val" | "test") {
            bail!(
                "unknown eval_split `{}` (expected train, val or test)",
                self.eval_split
            );
        }
        if self.infer_top_k == 0 {
            bail!("infer_top_k must be at least 1");
        }
        Ok(())
    }
}
