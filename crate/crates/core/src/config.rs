//! Run configuration: a flat `key=value` format, defaults, validation and
//! the per-stage hashes that key artifacts on disk.
//!
//! Lines may hold several whitespace-separated pairs; `#` starts a comment.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::collector::{CollectorConfig, DqnConfig};
use crate::encoder::{AugmentConfig, NtXentVariant, PretrainConfig};
use crate::generator::{FinetuneConfig, SearchConfig, SeedMode};
use crate::tabular::TaskKind;
use crate::utility::{UtilityConfig, UtilityKind};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("`{key}`: cannot read `{value}` as {expected}")]
    TypeError {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("`{key}` out of range: {reason}")]
    RangeError { key: String, reason: String },
    #[error("line {line}: expected key=value, got `{text}`")]
    Syntax { line: usize, text: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    NoPretrain,
    RandomCollector,
    RedundancyUtility,
    WorstSeeds,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoPretrain,
        Variant::RandomCollector,
        Variant::RedundancyUtility,
        Variant::WorstSeeds,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoPretrain => "no_pretrain",
            Variant::RandomCollector => "random_collector",
            Variant::RedundancyUtility => "redundancy_utility",
            Variant::WorstSeeds => "worst_seeds",
        }
    }

    pub fn from_name(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Builtin dataset name or CSV path.
    pub data: String,
    pub target: String,
    pub task: TaskKind,
    pub seed: u64,
    pub variant: Variant,

    pub k_neighbors: usize,
    pub mdcg_constant: f64,
    pub max_rows: usize,

    pub episodes: usize,
    pub steps: usize,
    /// 0 means twice the original feature count.
    pub max_features: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay: f64,
    pub dqn_gamma: f64,
    pub dqn_lr: f64,
    pub dqn_batch: usize,
    pub replay_capacity: usize,
    pub sync_every: usize,
    pub crosses_only: bool,

    pub pretrain_epochs: usize,
    pub pretrain_batch: usize,
    pub pretrain_lr: f64,
    pub tau: f64,
    pub edge_ratio: f64,
    pub mask_ratio: f64,
    pub ntxent: NtXentVariant,
    pub attr_rows: usize,
    pub percentile: f64,

    pub finetune_epochs: usize,
    pub finetune_batch: usize,
    pub finetune_lr: f64,
    pub alpha: f64,
    pub beta: f64,
    pub freeze_encoder: bool,
    pub decoder_hidden: usize,

    pub top_k: usize,
    pub search_steps: usize,
    pub step_size: f64,
    pub decode_trajectory: bool,

    pub folds: usize,
    pub knn_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let u = UtilityConfig::default();
        let c = CollectorConfig::default();
        let p = PretrainConfig::default();
        let f = FinetuneConfig::default();
        let s = SearchConfig::default();
        RunConfig {
            data: "synthetic".into(),
            target: "target".into(),
            task: TaskKind::Regression,
            seed: 0,
            variant: Variant::Full,
            k_neighbors: u.k_neighbors,
            mdcg_constant: u.constant,
            max_rows: u.max_rows,
            episodes: c.episodes,
            steps: c.steps,
            max_features: 0,
            epsilon_start: c.epsilon_start,
            epsilon_end: c.epsilon_end,
            epsilon_decay: c.epsilon_decay_fraction,
            dqn_gamma: c.dqn.gamma,
            dqn_lr: c.dqn.lr,
            dqn_batch: c.dqn.batch_size,
            replay_capacity: c.dqn.replay_capacity,
            sync_every: c.dqn.sync_every,
            crosses_only: c.record_crosses_only,
            pretrain_epochs: p.epochs,
            pretrain_batch: p.batch_size,
            pretrain_lr: p.lr,
            tau: p.tau,
            edge_ratio: p.augment.edge_ratio,
            mask_ratio: p.augment.mask_ratio,
            ntxent: p.variant,
            attr_rows: p.attr_rows,
            percentile: p.percentile,
            finetune_epochs: f.epochs,
            finetune_batch: f.batch_size,
            finetune_lr: f.lr,
            alpha: f.alpha,
            beta: f.beta,
            freeze_encoder: f.freeze_encoder,
            decoder_hidden: f.hidden,
            top_k: s.top_k,
            search_steps: s.steps,
            step_size: s.step_size,
            decode_trajectory: s.decode_trajectory,
            folds: 5,
            knn_k: crate::harness::DEFAULT_K,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, expected: &'static str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::TypeError {
        key: key.into(),
        value: value.into(),
        expected,
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ConfigError::TypeError {
            key: key.into(),
            value: value.into(),
            expected: "a boolean",
        }),
    }
}

impl RunConfig {
    /// Laptop-scale settings: 128 episodes of 10 steps, 30 pre-training
    /// epochs and 100 fine-tuning epochs with small batches.
    pub fn desk() -> RunConfig {
        RunConfig {
            episodes: 128,
            pretrain_epochs: 30,
            pretrain_batch: 128,
            finetune_epochs: 100,
            finetune_batch: 8,
            ..RunConfig::default()
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let f = |e| parse_num::<f64>(key, value, e);
        let u = |e| parse_num::<usize>(key, value, e);
        match key {
            "data" => self.data = value.to_string(),
            "target" => self.target = value.to_string(),
            "task" => {
                self.task = TaskKind::from_flag(value).ok_or_else(|| ConfigError::TypeError {
                    key: key.into(),
                    value: value.into(),
                    expected: "`c` or `r`",
                })?
            }
            "seed" => self.seed = parse_num(key, value, "an unsigned integer")?,
            "variant" => {
                self.variant = Variant::from_name(value).ok_or_else(|| ConfigError::TypeError {
                    key: key.into(),
                    value: value.into(),
                    expected: "a variant name",
                })?
            }
            "k_neighbors" => self.k_neighbors = u("a count")?,
            "mdcg_constant" => self.mdcg_constant = f("a real")?,
            "max_rows" => self.max_rows = u("a count")?,
            "episodes" => self.episodes = u("a count")?,
            "steps" => self.steps = u("a count")?,
            "max_features" => self.max_features = u("a count")?,
            "epsilon_start" => self.epsilon_start = f("a real")?,
            "epsilon_end" => self.epsilon_end = f("a real")?,
            "epsilon_decay" => self.epsilon_decay = f("a real")?,
            "dqn_gamma" => self.dqn_gamma = f("a real")?,
            "dqn_lr" => self.dqn_lr = f("a real")?,
            "dqn_batch" => self.dqn_batch = u("a count")?,
            "replay_capacity" => self.replay_capacity = u("a count")?,
            "sync_every" => self.sync_every = u("a count")?,
            "crosses_only" => self.crosses_only = parse_bool(key, value)?,
            "pretrain_epochs" => self.pretrain_epochs = u("a count")?,
            "pretrain_batch" => self.pretrain_batch = u("a count")?,
            "pretrain_lr" => self.pretrain_lr = f("a real")?,
            "tau" => self.tau = f("a real")?,
            "edge_ratio" => self.edge_ratio = f("a real")?,
            "mask_ratio" => self.mask_ratio = f("a real")?,
            "ntxent" => {
                self.ntxent = match value {
                    "verbatim" => NtXentVariant::Verbatim,
                    "standard" => NtXentVariant::Standard,
                    _ => {
                        return Err(ConfigError::TypeError {
                            key: key.into(),
                            value: value.into(),
                            expected: "`verbatim` or `standard`",
                        })
                    }
                }
            }
            "attr_rows" => self.attr_rows = u("a count")?,
            "percentile" => self.percentile = f("a real")?,
            "finetune_epochs" => self.finetune_epochs = u("a count")?,
            "finetune_batch" => self.finetune_batch = u("a count")?,
            "finetune_lr" => self.finetune_lr = f("a real")?,
            "alpha" => self.alpha = f("a real")?,
            "beta" => self.beta = f("a real")?,
            "freeze_encoder" => self.freeze_encoder = parse_bool(key, value)?,
            "decoder_hidden" => self.decoder_hidden = u("a count")?,
            "top_k" => self.top_k = u("a count")?,
            "search_steps" => self.search_steps = u("a count")?,
            "step_size" => self.step_size = f("a real")?,
            "decode_trajectory" => self.decode_trajectory = parse_bool(key, value)?,
            "folds" => self.folds = u("a count")?,
            "knn_k" => self.knn_k = u("a count")?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let range = |ok: bool, key: &str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::RangeError {
                    key: key.into(),
                    reason: reason.into(),
                })
            }
        };
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let pos = |v: f64| v > 0.0 && v.is_finite();
        range(self.k_neighbors >= 1, "k_neighbors", "must be at least 1")?;
        range(pos(self.mdcg_constant), "mdcg_constant", "must be positive")?;
        range(self.max_rows >= 2, "max_rows", "must be at least 2")?;
        range(self.episodes >= 1, "episodes", "must be at least 1")?;
        range(self.steps >= 1, "steps", "must be at least 1")?;
        range(unit(self.epsilon_start), "epsilon_start", "must lie in [0, 1]")?;
        range(unit(self.epsilon_end), "epsilon_end", "must lie in [0, 1]")?;
        range(unit(self.epsilon_decay), "epsilon_decay", "must lie in [0, 1]")?;
        range((0.0..1.0).contains(&self.dqn_gamma), "dqn_gamma", "must lie in [0, 1)")?;
        range(pos(self.dqn_lr), "dqn_lr", "must be positive")?;
        range(self.dqn_batch >= 1, "dqn_batch", "must be at least 1")?;
        range(self.replay_capacity >= self.dqn_batch, "replay_capacity", "must hold one batch")?;
        range(self.sync_every >= 1, "sync_every", "must be at least 1")?;
        range(self.pretrain_batch >= 2, "pretrain_batch", "must be at least 2")?;
        range(pos(self.pretrain_lr), "pretrain_lr", "must be positive")?;
        range(pos(self.tau), "tau", "must be positive")?;
        range(unit(self.edge_ratio), "edge_ratio", "must lie in [0, 1]")?;
        range(unit(self.mask_ratio), "mask_ratio", "must lie in [0, 1]")?;
        range(self.attr_rows >= 2, "attr_rows", "must be at least 2")?;
        range(unit(self.percentile), "percentile", "must lie in [0, 1]")?;
        range(self.finetune_batch >= 1, "finetune_batch", "must be at least 1")?;
        range(pos(self.finetune_lr), "finetune_lr", "must be positive")?;
        range(self.alpha >= 0.0 && self.alpha.is_finite(), "alpha", "must be non-negative")?;
        range(self.beta >= 0.0 && self.beta.is_finite(), "beta", "must be non-negative")?;
        range(self.decoder_hidden >= 1, "decoder_hidden", "must be at least 1")?;
        range(self.top_k >= 1, "top_k", "must be at least 1")?;
        range(self.step_size.is_finite(), "step_size", "must be finite")?;
        range(self.folds >= 2, "folds", "must be at least 2")?;
        range(self.knn_k >= 1, "knn_k", "must be at least 1")?;
        Ok(())
    }

    /// Every key with its current value, in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let ntxent = match self.ntxent {
            NtXentVariant::Verbatim => "verbatim",
            NtXentVariant::Standard => "standard",
        };
        vec![
            ("data", self.data.clone()),
            ("target", self.target.clone()),
            ("task", self.task.flag().into()),
            ("seed", self.seed.to_string()),
            ("variant", self.variant.name().into()),
            ("k_neighbors", self.k_neighbors.to_string()),
            ("mdcg_constant", format!("{:?}", self.mdcg_constant)),
            ("max_rows", self.max_rows.to_string()),
            ("episodes", self.episodes.to_string()),
            ("steps", self.steps.to_string()),
            ("max_features", self.max_features.to_string()),
            ("epsilon_start", format!("{:?}", self.epsilon_start)),
            ("epsilon_end", format!("{:?}", self.epsilon_end)),
            ("epsilon_decay", format!("{:?}", self.epsilon_decay)),
            ("dqn_gamma", format!("{:?}", self.dqn_gamma)),
            ("dqn_lr", format!("{:?}", self.dqn_lr)),
            ("dqn_batch", self.dqn_batch.to_string()),
            ("replay_capacity", self.replay_capacity.to_string()),
            ("sync_every", self.sync_every.to_string()),
            ("crosses_only", self.crosses_only.to_string()),
            ("pretrain_epochs", self.pretrain_epochs.to_string()),
            ("pretrain_batch", self.pretrain_batch.to_string()),
            ("pretrain_lr", format!("{:?}", self.pretrain_lr)),
            ("tau", format!("{:?}", self.tau)),
            ("edge_ratio", format!("{:?}", self.edge_ratio)),
            ("mask_ratio", format!("{:?}", self.mask_ratio)),
            ("ntxent", ntxent.into()),
            ("attr_rows", self.attr_rows.to_string()),
            ("percentile", format!("{:?}", self.percentile)),
            ("finetune_epochs", self.finetune_epochs.to_string()),
            ("finetune_batch", self.finetune_batch.to_string()),
            ("finetune_lr", format!("{:?}", self.finetune_lr)),
            ("alpha", format!("{:?}", self.alpha)),
            ("beta", format!("{:?}", self.beta)),
            ("freeze_encoder", self.freeze_encoder.to_string()),
            ("decoder_hidden", self.decoder_hidden.to_string()),
            ("top_k", self.top_k.to_string()),
            ("search_steps", self.search_steps.to_string()),
            ("step_size", format!("{:?}", self.step_size)),
            ("decode_trajectory", self.decode_trajectory.to_string()),
            ("folds", self.folds.to_string()),
            ("knn_k", self.knn_k.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn utility_kind(&self) -> UtilityKind {
        match self.variant {
            Variant::RedundancyUtility => UtilityKind::Redundancy,
            _ => UtilityKind::Mdcg,
        }
    }

    pub fn utility(&self) -> UtilityConfig {
        UtilityConfig {
            k_neighbors: self.k_neighbors,
            constant: self.mdcg_constant,
            max_rows: self.max_rows,
            row_seed: self.seed,
            ..UtilityConfig::default()
        }
    }

    pub fn collector(&self) -> CollectorConfig {
        CollectorConfig {
            episodes: self.episodes,
            steps: self.steps,
            max_features: (self.max_features > 0).then_some(self.max_features),
            dqn: DqnConfig {
                gamma: self.dqn_gamma,
                lr: self.dqn_lr,
                replay_capacity: self.replay_capacity,
                batch_size: self.dqn_batch,
                sync_every: self.sync_every,
                ..DqnConfig::default()
            },
            utility: self.utility(),
            utility_kind: self.utility_kind(),
            epsilon_start: self.epsilon_start,
            epsilon_end: self.epsilon_end,
            epsilon_decay_fraction: self.epsilon_decay,
            record_crosses_only: self.crosses_only,
            ..CollectorConfig::default()
        }
    }

    pub fn pretrain(&self) -> PretrainConfig {
        PretrainConfig {
            epochs: self.pretrain_epochs,
            batch_size: self.pretrain_batch,
            lr: self.pretrain_lr,
            tau: self.tau,
            augment: AugmentConfig {
                edge_ratio: self.edge_ratio,
                mask_ratio: self.mask_ratio,
            },
            variant: self.ntxent,
            attr_rows: self.attr_rows,
            row_seed: self.seed,
            percentile: self.percentile,
        }
    }

    pub fn finetune(&self) -> FinetuneConfig {
        FinetuneConfig {
            epochs: self.finetune_epochs,
            batch_size: self.finetune_batch,
            lr: self.finetune_lr,
            alpha: self.alpha,
            beta: self.beta,
            freeze_encoder: self.freeze_encoder,
            hidden: self.decoder_hidden,
        }
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            top_k: self.top_k,
            steps: self.search_steps,
            step_size: self.step_size,
            seed_mode: match self.variant {
                Variant::WorstSeeds => SeedMode::Worst,
                _ => SeedMode::Best,
            },
            decode_trajectory: self.decode_trajectory,
            ..SearchConfig::default()
        }
    }

    fn values(&self, keys: &[&str]) -> String {
        let all = self.entries();
        let mut out = String::new();
        for k in keys {
            let (_, v) = all.iter().find(|(name, _)| name == k).expect("known key");
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Hash of everything a stage's output depends on, chained through the
    /// stages it consumes. `dataset` is the content fingerprint of the table.
    pub fn stage_hash(&self, stage: Stage, dataset: &str) -> String {
        let own = match stage {
            Stage::Collect => {
                let mode = if self.variant == Variant::RandomCollector { "random" } else { "dqn" };
                format!(
                    "dataset={dataset}\ncollector={mode}\nutility={}\n{}",
                    self.utility_kind().name(),
                    self.values(&[
                        "seed", "k_neighbors", "mdcg_constant", "max_rows", "episodes", "steps", "max_features",
                        "epsilon_start", "epsilon_end", "epsilon_decay", "dqn_gamma", "dqn_lr", "dqn_batch",
                        "replay_capacity", "sync_every", "crosses_only",
                    ])
                )
            }
            Stage::Pretrain => {
                if self.variant == Variant::NoPretrain {
                    "pretrain=skipped\n".to_string()
                } else {
                    self.values(&[
                        "pretrain_epochs", "pretrain_batch", "pretrain_lr", "tau", "edge_ratio", "mask_ratio",
                        "ntxent",
                    ])
                }
            }
            Stage::Finetune => self.values(&[
                "attr_rows", "percentile", "finetune_epochs", "finetune_batch", "finetune_lr", "alpha", "beta",
                "freeze_encoder", "decoder_hidden",
            ]),
            Stage::Transform => format!(
                "seed_mode={:?}\n{}",
                self.search().seed_mode,
                self.values(&["top_k", "search_steps", "step_size", "decode_trajectory"])
            ),
            Stage::Eval => self.values(&["folds", "knn_k"]),
        };
        // Graph construction settings feed pre-training as well.
        let own = if stage == Stage::Pretrain {
            format!("{own}{}", self.values(&["attr_rows", "percentile"]))
        } else {
            own
        };
        let parent = stage.previous().map(|p| self.stage_hash(p, dataset)).unwrap_or_default();
        short_hash(format!("{}\n{parent}\n{own}", stage.name()).as_bytes())
    }

    /// Hash naming the run directory: the final stage's chained hash.
    pub fn config_hash(&self, dataset: &str) -> String {
        self.stage_hash(Stage::Eval, dataset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Collect,
    Pretrain,
    Finetune,
    Transform,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Collect, Stage::Pretrain, Stage::Finetune, Stage::Transform, Stage::Eval];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Collect => "collect",
            Stage::Pretrain => "pretrain",
            Stage::Finetune => "finetune",
            Stage::Transform => "transform",
            Stage::Eval => "eval",
        }
    }

    pub fn previous(self) -> Option<Stage> {
        match self {
            Stage::Collect => None,
            Stage::Pretrain => Some(Stage::Collect),
            Stage::Finetune => Some(Stage::Pretrain),
            Stage::Transform => Some(Stage::Finetune),
            Stage::Eval => Some(Stage::Transform),
        }
    }
}

pub fn short_hash(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

/// Reads `key=value` text over `base`, then applies `overrides` in order.
pub fn parse_config_onto(base: RunConfig, text: &str, overrides: &[(String, String)]) -> Result<RunConfig, ConfigError> {
    let mut cfg = base;
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for pair in line.split_whitespace() {
            let Some((k, v)) = pair.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: n + 1,
                    text: pair.to_string(),
                });
            };
            cfg.set(k.trim(), v.trim())?;
        }
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<RunConfig, ConfigError> {
    parse_config_onto(RunConfig::default(), text, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_config("", &[]).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!((c.episodes, c.steps), (512, 10));
        assert_eq!((c.pretrain_epochs, c.pretrain_batch, c.pretrain_lr, c.tau), (100, 1024, 0.001, 0.5));
        assert_eq!((c.edge_ratio, c.mask_ratio), (0.2, 0.2));
        assert_eq!((c.finetune_epochs, c.finetune_batch, c.finetune_lr), (500, 1024, 0.001));
        assert_eq!((c.alpha, c.beta), (10.0, 0.1));
        assert_eq!((c.k_neighbors, c.mdcg_constant), (5, 2.0));
    }

    #[test]
    fn alpha_beta_round_trip() {
        let c = parse_config("alpha=10 beta=0.1", &[]).unwrap();
        assert_eq!((c.alpha, c.beta), (10.0, 0.1));
        let again = parse_config(&c.to_text(), &[]).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_config("tau=-1", &[]), Err(ConfigError::RangeError { key, .. }) if key == "tau"));
        assert_eq!(parse_config("bogus=1", &[]), Err(ConfigError::UnknownKey("bogus".into())));
        assert!(matches!(parse_config("episodes=many", &[]), Err(ConfigError::TypeError { .. })));
        assert!(matches!(parse_config("episodes", &[]), Err(ConfigError::Syntax { line: 1, .. })));
    }

    #[test]
    fn overrides_win_and_comments_are_ignored() {
        let text = "# desk run\nepisodes=4 steps=3\nseed=9 # trailing\n";
        let c = parse_config(text, &[("episodes".into(), "2".into())]).unwrap();
        assert_eq!((c.episodes, c.steps, c.seed), (2, 3, 9));
    }

    #[test]
    fn variants_change_only_their_stage() {
        let base = RunConfig::default();
        let with = |v| RunConfig { variant: v, ..base.clone() };
        let hashes = |c: &RunConfig| Stage::ALL.map(|s| c.stage_hash(s, "d"));
        let full = hashes(&base);
        // First stage whose hash differs from the full run.
        let first_diff = |v| hashes(&with(v)).iter().zip(&full).position(|(a, b)| a != b);
        assert_eq!(first_diff(Variant::Full), None);
        assert_eq!(first_diff(Variant::RandomCollector), Some(0));
        assert_eq!(first_diff(Variant::RedundancyUtility), Some(0));
        assert_eq!(first_diff(Variant::NoPretrain), Some(1));
        assert_eq!(first_diff(Variant::WorstSeeds), Some(3));
        assert_ne!(base.stage_hash(Stage::Collect, "d"), base.stage_hash(Stage::Collect, "e"));
        let eval_only = RunConfig { knn_k: 3, ..base.clone() };
        assert_eq!(first_diff_between(&hashes(&eval_only), &full), Some(4));
    }

    fn first_diff_between(a: &[String; 5], b: &[String; 5]) -> Option<usize> {
        a.iter().zip(b).position(|(x, y)| x != y)
    }
}
