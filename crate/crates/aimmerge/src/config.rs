//! Experiment configuration (JSON, `schema_version` 1).

use std::fmt;
use std::path::{Path, PathBuf};

use aimmerge_core::{
    ControllerConfig, ControllerMode, InterferenceMode, ModelSpec, SequenceSpec, WeightRule,
};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that replaces the configured seed list with one seed.
pub const SEED_ENV: &str = "AIMMERGE_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// Full method: adaptive controller plus signal-derived fusion weights.
    Aim,
    /// Interval pinned at `s_init`, forgetting logic kept.
    AimNoLs,
    /// Merges every `s_current` steps from the learning signal alone.
    AimNoFs,
    /// Aim schedule with fixed global fusion weights.
    AimMgm { alpha1: f64 },
    /// Merge every `interval` steps with Aim's fusion weights.
    FixedInterval { interval: usize },
    /// One merge at the end of each task with fixed weights.
    SingleMergeEndOfTask { alpha1: f64 },
    /// Memory mixed into every gradient 1:1, no merging.
    ReplayOnly,
    /// Plain sequential fine-tuning.
    Sequential,
}

impl Strategy {
    pub fn label(&self) -> String {
        match self {
            Strategy::Aim => "aim".into(),
            Strategy::AimNoLs => "aim_no_ls".into(),
            Strategy::AimNoFs => "aim_no_fs".into(),
            Strategy::AimMgm { alpha1 } => format!("aim_mgm_{alpha1}"),
            Strategy::FixedInterval { interval } => format!("fixed_interval_{interval}"),
            Strategy::SingleMergeEndOfTask { alpha1 } => format!("single_merge_{alpha1}"),
            Strategy::ReplayOnly => "replay_only".into(),
            Strategy::Sequential => "sequential".into(),
        }
    }

    /// Controller mode for strategies that merge on a controller schedule.
    pub fn controller_mode(&self) -> Option<ControllerMode> {
        match self {
            Strategy::Aim | Strategy::AimMgm { .. } => Some(ControllerMode::FULL),
            Strategy::AimNoLs => Some(ControllerMode::NO_LEARNING_SIGNAL),
            Strategy::AimNoFs => Some(ControllerMode::NO_FORGETTING_SIGNAL),
            Strategy::FixedInterval { .. } => Some(ControllerMode::FIXED_INTERVAL),
            _ => None,
        }
    }

    pub fn weight_rule(&self) -> WeightRule {
        match *self {
            Strategy::AimMgm { alpha1 } | Strategy::SingleMergeEndOfTask { alpha1 } => {
                WeightRule::Fixed {
                    alpha1,
                    alpha2: 1.0 - alpha1,
                }
            }
            _ => WeightRule::Adaptive,
        }
    }

    pub fn uses_memory(&self) -> bool {
        !matches!(self, Strategy::Sequential)
    }

    /// Whether a memory probe loss is measured every iteration.
    pub fn probes_memory(&self) -> bool {
        matches!(
            self,
            Strategy::Aim
                | Strategy::AimNoLs
                | Strategy::AimMgm { .. }
                | Strategy::FixedInterval { .. }
        )
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Strategy::AimMgm { alpha1 } | Strategy::SingleMergeEndOfTask { alpha1 }
                if !(0.0..=1.0).contains(&alpha1) =>
            {
                Err(HarnessError::Config(format!(
                    "{}: alpha1 must lie in [0, 1]",
                    self.label()
                )))
            }
            Strategy::FixedInterval { interval: 0 } => Err(HarnessError::Config(
                "fixed_interval: interval must be at least 1".into(),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Base task sequence; each run adds its seed to `sequence.seed`.
    pub sequence: SequenceSpec,
    /// Base model; each run adds its seed to `model.seed`.
    pub model: ModelSpec,
    #[serde(default)]
    pub controller: ControllerConfig,
    pub strategies: Vec<Strategy>,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs_per_task: usize,
    pub memory_fraction: f64,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Start every task with a fresh controller instead of carrying Λ
    /// history and the interval over.
    #[serde(default)]
    pub reset_controller_per_task: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

/// Learning rate used by the reference LLM setup; kept for API users.
pub const REFERENCE_LR: f64 = 3e-4;

/// Default training batch size.
pub const DEFAULT_BATCH_SIZE: usize = 8;

impl Default for ExperimentConfig {
    /// The calibrated desk-scale setup: 4 rotated tasks, 16 features,
    /// 4 classes, 500 training samples per task, 3 seeds.
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            sequence: SequenceSpec {
                num_tasks: 4,
                input_dim: 16,
                classes_per_task: 4,
                samples_per_task: 500,
                test_samples_per_task: 200,
                interference_mode: InterferenceMode::Rotation,
                interference_strength: std::f64::consts::FRAC_PI_2,
                class_separation: 3.0,
                noise_std: 1.0,
                seed: 0,
            },
            model: ModelSpec {
                input_dim: 16,
                hidden_dims: vec![32],
                num_classes: 4,
                activation: Default::default(),
                seed: 0,
            },
            controller: ControllerConfig::default(),
            strategies: vec![
                Strategy::Aim,
                Strategy::AimNoLs,
                Strategy::AimNoFs,
                Strategy::FixedInterval { interval: 8 },
                Strategy::ReplayOnly,
                Strategy::Sequential,
            ],
            lr: 0.02,
            batch_size: DEFAULT_BATCH_SIZE,
            epochs_per_task: 5,
            memory_fraction: 0.02,
            seeds: vec![0, 1, 2],
            output_dir: default_output_dir(),
            reset_controller_per_task: false,
        }
    }
}

/// Memory sizes offered as presets (fraction of each task's training set).
pub const MEMORY_PRESETS: [f64; 4] = [0.02, 0.05, 0.10, 0.50];

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Replaces the seed list when `AIMMERGE_SEED` is set.
    pub fn apply_env_overrides(&mut self) -> Result<()> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            let seed = raw.trim().parse::<u64>().map_err(|_| {
                HarnessError::Config(format!("{SEED_ENV}={raw:?} is not an unsigned integer"))
            })?;
            self.seeds = vec![seed];
        }
        Ok(())
    }

    /// Hard validation plus warnings for hyperparameters outside the range
    /// the method was shown to be robust in.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let core = |e: aimmerge_core::Error| HarnessError::Config(e.to_string());
        self.sequence.validate().map_err(core)?;
        self.model.validate().map_err(core)?;
        self.controller.validate().map_err(core)?;
        if self.model.input_dim != self.sequence.input_dim {
            return cfg_err("model.input_dim must equal sequence.input_dim");
        }
        if self.model.num_classes < self.sequence.classes_per_task {
            return cfg_err("model.num_classes must cover sequence.classes_per_task");
        }
        if self.strategies.is_empty() {
            return cfg_err("at least one strategy is required");
        }
        for s in &self.strategies {
            s.validate()?;
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return cfg_err("lr must be positive");
        }
        if self.batch_size == 0 || self.epochs_per_task == 0 {
            return cfg_err("batch_size and epochs_per_task must be positive");
        }
        if !(self.memory_fraction > 0.0 && self.memory_fraction <= 1.0) {
            return cfg_err("memory_fraction must lie in (0, 1]");
        }
        if self.seeds.is_empty() {
            return cfg_err("at least one seed is required");
        }

        let c = &self.controller;
        let ranges: [(&str, f64, f64, f64); 4] = [
            ("s_init", c.s_init as f64, 2.0, 32.0),
            ("l_w", c.l_w as f64, 2.0, 8.0),
            ("gamma_forget", c.gamma_forget, 2.0, 32.0),
            ("f_max", c.f_max as f64, 2.0, 8.0),
        ];
        for (name, v, lo, hi) in ranges {
            if v < lo || v > hi {
                log::warn!("controller.{name} = {v} is outside the tested range [{lo}, {hi}]");
            }
        }
        Ok(())
    }

    /// Number of training iterations in one task.
    pub fn iterations_per_task(&self) -> usize {
        self.epochs_per_task * self.sequence.samples_per_task.div_ceil(self.batch_size)
    }

    pub fn sequence_for(&self, seed: u64) -> SequenceSpec {
        SequenceSpec {
            seed: self.sequence.seed.wrapping_add(seed),
            ..self.sequence.clone()
        }
    }

    pub fn model_for(&self, seed: u64) -> ModelSpec {
        ModelSpec {
            seed: self.model.seed.wrapping_add(seed),
            ..self.model.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_json() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.iterations_per_task(), 5 * 63);
    }

    #[test]
    fn strategy_json_shape() {
        let s = serde_json::to_string(&Strategy::FixedInterval { interval: 8 }).unwrap();
        assert_eq!(s, r#"{"kind":"fixed_interval","interval":8}"#);
        let aim: Strategy = serde_json::from_str(r#"{"kind":"aim"}"#).unwrap();
        assert_eq!(aim, Strategy::Aim);
        let mgm: Strategy = serde_json::from_str(r#"{"kind":"aim_mgm","alpha1":0.7}"#).unwrap();
        assert_eq!(mgm.weight_rule(), WeightRule::Fixed { alpha1: 0.7, alpha2: 1.0 - 0.7 });
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = ExperimentConfig { schema_version: 2, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(HarnessError::Config(_))));
        cfg.schema_version = 1;
        cfg.memory_fraction = 0.0;
        assert!(cfg.validate().is_err());
        cfg.memory_fraction = 0.02;
        cfg.strategies = vec![Strategy::AimMgm { alpha1: 1.5 }];
        assert!(cfg.validate().is_err());
        cfg.strategies = vec![Strategy::FixedInterval { interval: 0 }];
        assert!(cfg.validate().is_err());
        cfg.strategies = vec![Strategy::Aim];
        cfg.model.input_dim = 3;
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_json("{\"schema_version\": 1}").is_err());
    }

    #[test]
    fn out_of_range_hyperparameters_only_warn() {
        let mut cfg = ExperimentConfig::default();
        cfg.controller.s_init = 40;
        cfg.controller.s_max = 128;
        cfg.controller.f_max = 12;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn memory_presets() {
        for f in MEMORY_PRESETS {
            let cfg = ExperimentConfig { memory_fraction: f, ..Default::default() };
            assert!(cfg.validate().is_ok());
        }
    }
}
