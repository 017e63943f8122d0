//! Run configuration shared by every CLI command.
//!
//! Settings resolve in three layers, later layers winning:
//!
//! 1. a JSON config file (`--config run.json`),
//! 2. command-line flags,
//! 3. the `GENDP_SEED` environment variable (seed only).
//!
//! The config file is a single JSON object whose keys are the field
//! names of [`RunConfig`]; every key is optional and unknown keys are
//! rejected. Defaults are the published hyperparameters:
//!
//! ```json
//! {
//!   "d_emb": 300, "d_enc": 350, "d_policy": 150, "d_attn": 150,
//!   "kb_dim": 20, "max_belief_len": 10, "max_action_len": 30,
//!   "init_range": 0.08,
//!   "lr_supervised": 0.001, "lr_rl": 0.0001, "weight_decay": 0.001,
//!   "patience": 3, "batch_size": 16, "max_epochs": 50, "rl_epochs": 5,
//!   "reward_full": 2.0, "reward_act_only": 1.0, "reward_wrong": -5.0,
//!   "reward_decay": 0.8, "rollouts": 5,
//!   "seed": 0, "policy": "gdp", "threshold": 0.5, "split": "test",
//!   "corpus": "train.jsonl", "dev_corpus": "dev.jsonl",
//!   "kb": "kb.json", "ontology": "ontology.json",
//!   "templates": "templates.json", "checkpoint": "model.ckpt",
//!   "out": "model-rl.ckpt", "report": "report.json", "curve": "curve.csv"
//! }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::PolicyKind;
use crate::corpus::Split;
use crate::model::ModelConfig;
use crate::training::{RewardSpec, TrainConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config file {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    BadPolicy(String),
    #[error("unknown split `{0}` (expected train, dev, or test)")]
    BadSplit(String),
    #[error("GENDP_SEED must be an unsigned integer, got `{0}`")]
    BadSeed(String),
    #[error("missing required path: pass --{flag} or set `{field}` in the config file")]
    MissingPath { flag: &'static str, field: &'static str },
}

/// Fully resolved settings for one command run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // Model dimensions.
    pub d_emb: usize,
    pub d_enc: usize,
    pub d_policy: usize,
    pub d_attn: usize,
    pub kb_dim: usize,
    pub max_belief_len: usize,
    pub max_action_len: usize,
    pub init_range: f64,
    // Optimization.
    pub lr_supervised: f64,
    pub lr_rl: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub rl_epochs: usize,
    // Reward scheme for fine-tuning.
    pub reward_full: f64,
    pub reward_act_only: f64,
    pub reward_wrong: f64,
    pub reward_decay: f64,
    pub rollouts: usize,
    // Run identity.
    pub seed: u64,
    pub policy: PolicyKind,
    pub threshold: f64,
    pub split: Split,
    // Paths.
    pub corpus: Option<PathBuf>,
    pub dev_corpus: Option<PathBuf>,
    pub kb: Option<PathBuf>,
    pub ontology: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub curve: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        let r = RewardSpec::default();
        Self {
            d_emb: m.d_emb,
            d_enc: m.d_enc,
            d_policy: m.d_policy,
            d_attn: m.d_attn,
            kb_dim: m.kb_dim,
            max_belief_len: m.max_belief_len,
            max_action_len: m.max_action_len,
            init_range: m.init_range,
            lr_supervised: t.lr_supervised,
            lr_rl: t.lr_rl,
            weight_decay: t.weight_decay,
            patience: t.patience,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            rl_epochs: 5,
            reward_full: r.full_correct,
            reward_act_only: r.act_only_correct,
            reward_wrong: r.wrong,
            reward_decay: r.decay,
            rollouts: r.rollouts,
            seed: t.seed,
            policy: PolicyKind::Gdp,
            threshold: 0.5,
            split: Split::Test,
            corpus: None,
            dev_corpus: None,
            kb: None,
            ontology: None,
            templates: None,
            checkpoint: None,
            out: None,
            report: None,
            curve: None,
        }
    }
}

impl RunConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            d_emb: self.d_emb,
            d_enc: self.d_enc,
            d_policy: self.d_policy,
            d_attn: self.d_attn,
            kb_dim: self.kb_dim,
            max_belief_len: self.max_belief_len,
            max_action_len: self.max_action_len,
            init_range: self.init_range,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr_supervised: self.lr_supervised,
            lr_rl: self.lr_rl,
            weight_decay: self.weight_decay,
            patience: self.patience,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            seed: self.seed,
        }
    }

    pub fn reward_spec(&self) -> RewardSpec {
        RewardSpec {
            full_correct: self.reward_full,
            act_only_correct: self.reward_act_only,
            wrong: self.reward_wrong,
            decay: self.reward_decay,
            rollouts: self.rollouts,
        }
    }
}

/// Demands a path the command cannot run without; the error names both
/// the flag and the config-file key.
pub fn require<'a>(
    opt: &'a Option<PathBuf>,
    flag: &'static str,
    field: &'static str,
) -> Result<&'a Path, ConfigError> {
    opt.as_deref().ok_or(ConfigError::MissingPath { flag, field })
}

/// Per-flag overrides, all optional; anything left unset falls through
/// to the config file and then to the defaults.
#[derive(Debug, Default, clap::Args)]
pub struct Overrides {
    /// JSON config file; flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Word embedding size.
    #[arg(long, value_name = "N")]
    pub d_emb: Option<usize>,
    /// Encoder / tracker hidden size.
    #[arg(long, value_name = "N")]
    pub d_enc: Option<usize>,
    /// Policy decoder hidden size.
    #[arg(long, value_name = "N")]
    pub d_policy: Option<usize>,
    /// Attention projection size.
    #[arg(long, value_name = "N")]
    pub d_attn: Option<usize>,
    /// KB count encoding size.
    #[arg(long, value_name = "N")]
    pub kb_dim: Option<usize>,
    /// Belief decode cap, in tokens.
    #[arg(long, value_name = "N")]
    pub max_belief_len: Option<usize>,
    /// Action decode cap, in tokens.
    #[arg(long, value_name = "N")]
    pub max_action_len: Option<usize>,
    /// Half-width of the uniform init interval.
    #[arg(long, value_name = "X")]
    pub init_range: Option<f64>,

    /// Supervised learning rate.
    #[arg(long, value_name = "X")]
    pub lr_supervised: Option<f64>,
    /// Fine-tuning learning rate.
    #[arg(long, value_name = "X")]
    pub lr_rl: Option<f64>,
    /// Adam weight decay.
    #[arg(long, value_name = "X")]
    pub weight_decay: Option<f64>,
    /// Early-stopping patience, in epochs.
    #[arg(long, value_name = "N")]
    pub patience: Option<usize>,
    /// Minibatch size.
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,
    /// Supervised epoch cap.
    #[arg(long, value_name = "N")]
    pub max_epochs: Option<usize>,
    /// Fine-tuning epoch count.
    #[arg(long, value_name = "N")]
    pub rl_epochs: Option<usize>,

    /// Reward for a fully correct action.
    #[arg(long, value_name = "X", allow_negative_numbers = true)]
    pub reward_full: Option<f64>,
    /// Reward for correct acts with wrong parameters.
    #[arg(long, value_name = "X", allow_negative_numbers = true)]
    pub reward_act_only: Option<f64>,
    /// Reward for a wrong action.
    #[arg(long, value_name = "X", allow_negative_numbers = true)]
    pub reward_wrong: Option<f64>,
    /// Per-step reward decay.
    #[arg(long, value_name = "X")]
    pub reward_decay: Option<f64>,
    /// Sampled rollouts per step-reward estimate.
    #[arg(long, value_name = "N")]
    pub rollouts: Option<usize>,

    /// RNG seed (the GENDP_SEED env var beats this flag).
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Dialogue policy: gdp, e2ecm, or cdm.
    #[arg(long, value_name = "NAME")]
    pub policy: Option<String>,
    /// Multi-label decision threshold for the e2ecm policy.
    #[arg(long, value_name = "X")]
    pub threshold: Option<f64>,
    /// Split label for loaded corpora: train, dev, or test.
    #[arg(long, value_name = "NAME")]
    pub split: Option<String>,

    /// Corpus to train on or evaluate (JSONL).
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// Held-out corpus for early stopping (JSONL).
    #[arg(long, value_name = "FILE")]
    pub dev_corpus: Option<PathBuf>,
    /// Knowledge base records (JSON).
    #[arg(long, value_name = "FILE")]
    pub kb: Option<PathBuf>,
    /// Value-to-slot ontology (JSON).
    #[arg(long, value_name = "FILE")]
    pub ontology: Option<PathBuf>,
    /// Response template bank (JSON). Read by eval and chat; train mines
    /// one from the training corpus and writes it here when set.
    #[arg(long, value_name = "FILE")]
    pub templates: Option<PathBuf>,
    /// Checkpoint to write (train) or read (everything else).
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Where fine-tuning writes its checkpoint.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Where eval writes the report JSON.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    /// Where training writes the learning-curve CSV.
    #[arg(long, value_name = "FILE")]
    pub curve: Option<PathBuf>,
}

/// Merges the three layers into a ready-to-use config. `env_seed` is
/// the raw value of `GENDP_SEED`, if set.
pub fn resolve(ov: &Overrides, env_seed: Option<&str>) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &ov.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|source| ConfigError::Read { path: path.clone(), source })?;
            serde_json::from_str::<RunConfig>(&text)
                .map_err(|source| ConfigError::Parse { path: path.clone(), source })?
        }
        None => RunConfig::default(),
    };

    macro_rules! overlay {
        ($($f:ident),* $(,)?) => {
            $( if let Some(v) = ov.$f { cfg.$f = v; } )*
        };
    }
    macro_rules! overlay_path {
        ($($f:ident),* $(,)?) => {
            $( if ov.$f.is_some() { cfg.$f = ov.$f.clone(); } )*
        };
    }
    overlay!(
        d_emb, d_enc, d_policy, d_attn, kb_dim, max_belief_len, max_action_len, init_range,
        lr_supervised, lr_rl, weight_decay, patience, batch_size, max_epochs, rl_epochs,
        reward_full, reward_act_only, reward_wrong, reward_decay, rollouts, seed, threshold,
    );
    overlay_path!(corpus, dev_corpus, kb, ontology, templates, checkpoint, out, report, curve);
    if let Some(p) = &ov.policy {
        cfg.policy = p.parse().map_err(ConfigError::BadPolicy)?;
    }
    if let Some(s) = &ov.split {
        cfg.split = match s.as_str() {
            "train" => Split::Train,
            "dev" => Split::Dev,
            "test" => Split::Test,
            other => return Err(ConfigError::BadSplit(other.to_string())),
        };
    }
    if let Some(raw) = env_seed {
        cfg.seed =
            raw.trim().parse().map_err(|_| ConfigError::BadSeed(raw.to_string()))?;
    }
    Ok(cfg)
}
