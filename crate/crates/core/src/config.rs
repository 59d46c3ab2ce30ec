//! Experiment configuration: one TOML document drives every command.
//!
//! Ablations and baselines are pure config switches (reward mode, dataset
//! mode, phase mode, freeze flag) over the same trainer; presets bundle the
//! combinations. Every artifact a run writes embeds the config hash.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::motion::edit::DatasetMode;
use crate::rewards::RewardConfig;
use crate::sim::{RandomizationConfig, SimConfig};
use crate::tasks::{TaskId, TaskParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config field {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("unknown preset {0}")]
    UnknownPreset(String),
    #[error("override path {0} not found")]
    BadOverridePath(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// How the global (sparse-group) tracking reward fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlobalRewardMode {
    /// Gated to keyframe ticks against edited keyframes.
    KeyframeSparse,
    /// Every tick against the dense tracked motion.
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip: f64,
    pub entropy_coef: f64,
    pub gae_lambda: f64,
    pub desired_kl: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub lr_init: f64,
    pub lr_min: f64,
    pub lr_max: f64,
    pub gamma_sparse: f64,
    pub gamma_dense: f64,
    pub value_loss_coef: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip: 0.2,
            entropy_coef: 0.01,
            gae_lambda: 0.95,
            desired_kl: 0.01,
            epochs: 5,
            minibatches: 4,
            lr_init: 1e-3,
            lr_min: 1e-5,
            lr_max: 1e-2,
            gamma_sparse: 1.0,
            gamma_dense: 0.99,
            value_loss_coef: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub ppo: PpoConfig,
    pub n_envs: usize,
    pub n_steps: usize,
    pub iterations_stage1: usize,
    pub iterations_stage2: usize,
    /// Iteration after which termination switches to the relaxed mode.
    pub curriculum_switch_iter: usize,
    pub global_reward: GlobalRewardMode,
    pub dataset: DatasetMode,
    /// Train a flexible phase interval jointly in one stage (no stage 2).
    pub adaptive_phase_stage1: bool,
    /// Freeze the base policy and critics during stage 2.
    pub freeze_base: bool,
    pub policy_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub adapter_hidden: Vec<usize>,
    pub init_log_std: f64,
    pub adapter_init_log_std: f64,
    /// PD target = reference posture + action_scale * action.
    pub action_scale: f64,
    /// Observation history stack length.
    pub history_len: usize,
    /// Rollout/update worker threads; 0 = all cores.
    pub n_workers: usize,
    /// Episode tick cap as a multiple of the nominal motion length.
    pub max_episode_ticks_factor: f64,
    /// Reference-state initialization from random keyframes.
    pub rsi: bool,
    /// Adaptive phase interval bounds as factors of the base interval:
    /// delta in [-lower * dphi, +upper * dphi].
    pub dphi_lower_factor: f64,
    pub dphi_upper_factor: f64,
    /// Output gain of the tracking-adapter head: the compensation term is
    /// dphi_delta * gain * sample, so the head can reach useful magnitudes
    /// despite the small phase-interval scale.
    pub track_adapter_gain: f64,
    /// Optional output-Lipschitz regularizer on policy means:
    /// coef * ||mu(o + delta) - mu(o)||^2 for a small observation jitter.
    /// Off by default.
    pub lipschitz_coef: f64,
    /// Jitter magnitude for the Lipschitz term (normalized obs units).
    pub lipschitz_delta: f64,
    /// Expected stage-1 checkpoint hash for stage 2 (refuse on mismatch).
    pub expected_base_sha: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            ppo: PpoConfig::default(),
            n_envs: 256,
            n_steps: 75,
            iterations_stage1: 600,
            iterations_stage2: 400,
            curriculum_switch_iter: 300,
            global_reward: GlobalRewardMode::KeyframeSparse,
            dataset: DatasetMode::KeyframeEdit,
            adaptive_phase_stage1: false,
            freeze_base: true,
            policy_hidden: vec![256, 128, 64],
            critic_hidden: vec![256, 128, 64],
            adapter_hidden: vec![128, 64],
            init_log_std: -1.0,
            adapter_init_log_std: -1.0,
            action_scale: 1.0,
            history_len: 1,
            n_workers: 0,
            max_episode_ticks_factor: 4.2,
            rsi: true,
            dphi_lower_factor: 0.75,
            dphi_upper_factor: 1.0,
            track_adapter_gain: 25.0,
            lipschitz_coef: 0.0,
            lipschitz_delta: 0.01,
            expected_base_sha: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Episodes per (psi, seed) cell.
    pub episodes_per_psi: usize,
    /// Grid sizes across the easy band and each hard band.
    pub psi_grid_easy: usize,
    pub psi_grid_hard: usize,
    pub seeds: Vec<u64>,
    /// Success threshold on the mean body error at any keyframe, meters
    /// (0.77 x character height).
    pub success_threshold_m: f64,
    /// Deterministic (mean) actions unless set.
    pub stochastic: bool,
    pub randomization_on: bool,
    /// Dump per-tick trajectories to JSONL.
    pub dump_trajectories: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            episodes_per_psi: 4,
            psi_grid_easy: 8,
            psi_grid_hard: 4,
            seeds: vec![101, 202, 303],
            success_threshold_m: 0.77,
            stochastic: false,
            randomization_on: true,
            dump_trajectories: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionBlock {
    pub frame_rate_hz: f64,
    pub n_uniform_keyframes: usize,
    /// Reward multiplier for semantic keyframes (takeoff, landing, ...).
    pub semantic_reward_scale: f64,
    /// Load the base motion from a file instead of generating it.
    pub motion_path: Option<String>,
}

impl Default for MotionBlock {
    fn default() -> Self {
        MotionBlock {
            frame_rate_hz: 50.0,
            n_uniform_keyframes: 5,
            semantic_reward_scale: 2.0,
            motion_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimBlock {
    #[serde(flatten)]
    pub config: SimConfig,
    pub morphology_path: Option<String>,
    pub randomization: RandomizationConfig,
}

impl Default for SimBlock {
    fn default() -> Self {
        SimBlock { config: SimConfig::default(), morphology_path: None, randomization: RandomizationConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub task: TaskParams,
    pub motion: MotionBlock,
    pub sim: SimBlock,
    pub reward: RewardConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 7,
            task: TaskParams::far_jump_default(),
            motion: MotionBlock::default(),
            sim: SimBlock::default(),
            reward: RewardConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn for_task(task_id: TaskId) -> Self {
        ExperimentConfig { task: TaskParams::defaults_for(task_id), ..Default::default() }
    }

    pub fn parse_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::parse_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Stable hash of the canonical serialized config; embedded in every
    /// artifact the run writes.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        let digest = hasher.finalize();
        crate::nets::checkpoint::hex(&digest)[..12].to_string()
    }

    /// Apply one `--set key.path=value` override onto the TOML tree.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut tree: toml::Value =
            toml::from_str(&self.to_toml()).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for (path, raw) in overrides {
            let value = parse_override_value(raw);
            let parts: Vec<&str> = path.split('.').collect();
            let (last, dirs) = parts.split_last().expect("non-empty path");
            let mut node = &mut tree;
            for part in dirs {
                node = node
                    .as_table_mut()
                    .and_then(|t| t.get_mut(*part))
                    .ok_or_else(|| ConfigError::BadOverridePath(path.clone()))?;
            }
            let table =
                node.as_table_mut().ok_or_else(|| ConfigError::BadOverridePath(path.clone()))?;
            if !table.contains_key(*last) {
                return Err(ConfigError::BadOverridePath(path.clone()));
            }
            table.insert(last.to_string(), value);
        }
        let text = toml::to_string(&tree).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::parse_toml(&text)
    }

    /// Named ablation/baseline presets: each is a switch combination over
    /// the same trainer.
    pub fn apply_preset(&mut self, preset: &str) -> Result<(), ConfigError> {
        let t = &mut self.train;
        match preset {
            // Full method: sparse keyframe rewards, edited keyframes,
            // stage 2 adapters over a frozen base.
            "two_stage" => {
                t.global_reward = GlobalRewardMode::KeyframeSparse;
                t.dataset = DatasetMode::KeyframeEdit;
                t.adaptive_phase_stage1 = false;
                t.freeze_base = true;
            }
            // Stage 1 only (fixed phase interval).
            "stage1_only" => {
                t.global_reward = GlobalRewardMode::KeyframeSparse;
                t.dataset = DatasetMode::KeyframeEdit;
                t.adaptive_phase_stage1 = false;
            }
            // One stage with a jointly trained flexible phase interval.
            "stage1_flex_phase" => {
                t.global_reward = GlobalRewardMode::KeyframeSparse;
                t.dataset = DatasetMode::KeyframeEdit;
                t.adaptive_phase_stage1 = true;
            }
            // Stage 2 without freezing the base.
            "no_freeze" => {
                t.global_reward = GlobalRewardMode::KeyframeSparse;
                t.dataset = DatasetMode::KeyframeEdit;
                t.adaptive_phase_stage1 = false;
                t.freeze_base = false;
            }
            // Two-stage method on rule-edited dense motions with dense
            // global rewards (the per-frame-editing counterpart).
            "dense_edit_two_stage" => {
                t.global_reward = GlobalRewardMode::Dense;
                t.dataset = DatasetMode::RuleEditDense;
                t.adaptive_phase_stage1 = false;
                t.freeze_base = true;
            }
            // Single-motion tracker: no adaptation at all.
            "no_adapt" => {
                t.global_reward = GlobalRewardMode::Dense;
                t.dataset = DatasetMode::Original;
                t.adaptive_phase_stage1 = false;
            }
            // Classical rule-based editing baseline with fixed phase.
            "rule_adapt" => {
                t.global_reward = GlobalRewardMode::Dense;
                t.dataset = DatasetMode::RuleEditDense;
                t.adaptive_phase_stage1 = false;
            }
            // Rule-based editing plus a jointly trained flexible phase.
            "rule_adapt_flex_phase" => {
                t.global_reward = GlobalRewardMode::Dense;
                t.dataset = DatasetMode::RuleEditDense;
                t.adaptive_phase_stage1 = true;
            }
            other => return Err(ConfigError::UnknownPreset(other.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &str, message: String| -> Result<(), ConfigError> {
            Err(ConfigError::Invalid { field: field.into(), message })
        };
        let p = &self.train.ppo;
        if !(p.gae_lambda > 0.0 && p.gae_lambda <= 1.0) {
            return bad("train.ppo.gae_lambda", format!("{} not in (0, 1]", p.gae_lambda));
        }
        for (name, g) in [("gamma_sparse", p.gamma_sparse), ("gamma_dense", p.gamma_dense)] {
            if !(0.0..=1.0).contains(&g) {
                return bad(&format!("train.ppo.{name}"), format!("{g} not in [0, 1]"));
            }
        }
        if p.clip <= 0.0 {
            return bad("train.ppo.clip", format!("{} must be positive", p.clip));
        }
        if p.epochs == 0 || p.minibatches == 0 {
            return bad("train.ppo.epochs", "epochs/minibatches must be positive".into());
        }
        if self.train.n_envs == 0 || self.train.n_steps == 0 {
            return bad("train.n_envs", "need at least one env and one step".into());
        }
        if self.task.psi_range.0 >= self.task.psi_range.1 {
            return bad("task.psi_range", format!("{:?} is empty", self.task.psi_range));
        }
        if !self.task.psi_in_range(self.task.base_value) {
            return bad("task.base_value", "base value outside psi_range".into());
        }
        if self.task.easy_band.0 >= self.task.easy_band.1 {
            return bad("task.easy_band", format!("{:?} is empty", self.task.easy_band));
        }
        if self.train.global_reward == GlobalRewardMode::Dense
            && self.train.dataset == DatasetMode::KeyframeEdit
        {
            return bad(
                "train.global_reward",
                "dense global rewards need a dense reference (rule_edit_dense or original)".into(),
            );
        }
        if self.train.dphi_lower_factor <= 0.0 || self.train.dphi_lower_factor >= 1.0 {
            return bad(
                "train.dphi_lower_factor",
                format!("{} must lie in (0, 1) so the phase keeps advancing", self.train.dphi_lower_factor),
            );
        }
        if self.train.history_len == 0 {
            return bad("train.history_len", "history stack needs at least one frame".into());
        }
        if self.reward.group_weights.0 < 0.0 || self.reward.group_weights.1 < 0.0 {
            return bad("reward.group_weights", "group weights must be nonnegative".into());
        }
        if self.eval.seeds.is_empty() {
            return bad("eval.seeds", "need at least one evaluation seed".into());
        }
        if self.eval.success_threshold_m <= 0.0 {
            return bad("eval.success_threshold_m", "threshold must be positive".into());
        }
        Ok(())
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    if let Ok(b) = raw.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    // Bracketed lists parse as TOML arrays.
    if raw.starts_with('[') {
        if let Ok(v) = toml::from_str::<toml::Value>(&format!("x = {raw}")) {
            if let Some(t) = v.as_table() {
                if let Some(x) = t.get("x") {
                    return x.clone();
                }
            }
        }
    }
    toml::Value::String(raw.to_string())
}
