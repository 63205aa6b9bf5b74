//! Training configuration.
//!
//! A config file is TOML with any subset of the [`TrainConfig`] fields:
//!
//! ```toml
//! mode = "event"            # event | entity | all
//! mentions = "predicted"    # gold | predicted
//! epochs = 30
//! batch_size = 32
//! learning_rate = 1e-4
//! dropout = 0.3
//! hidden = 1024
//! width_dim = 20
//! max_span_width = 10      # omitted: per-mode default
//! lambda = 0.25            # omitted: per-mode default
//! tau = 0.75
//! neg_ratio = 20
//! pretrain_epochs = 10
//! pretrain_patience = 2
//! seed = 0
//! loss = "bce"              # bce | positive-only
//!
//! [ablations]
//! no_pretrain = false
//! frozen_pruning = false
//! no_neg_sampling = false
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::MentionMode;
use crate::error::{Error, Result};
use crate::neural::{AdamConfig, LossKind};
use crate::pairs::PairMode;

/// Where candidate mentions come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MentionSource {
    Gold,
    #[default]
    Predicted,
}

impl MentionSource {
    /// Gold mentions ignore the mention scores.
    pub fn pair_mode(self) -> PairMode {
        match self {
            MentionSource::Gold => PairMode::Gold,
            MentionSource::Predicted => PairMode::Full,
        }
    }
}

impl fmt::Display for MentionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MentionSource::Gold => "gold",
            MentionSource::Predicted => "predicted",
        })
    }
}

impl FromStr for MentionSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gold" => Ok(MentionSource::Gold),
            "predicted" => Ok(MentionSource::Predicted),
            other => Err(Error::Config(format!("unknown mention source `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    /// Skip mention-scorer pre-training.
    pub no_pretrain: bool,
    /// Freeze every span parameter during pair training and keep the
    /// candidate set computed before the first epoch.
    pub frozen_pruning: bool,
    /// Train on all negative pairs.
    pub no_neg_sampling: bool,
}

/// Per-mode `(max span width, lambda)`.
pub fn mode_defaults(mode: MentionMode) -> (usize, f64) {
    match mode {
        MentionMode::Event => (10, 0.25),
        MentionMode::Entity => (15, 0.35),
        MentionMode::All => (15, 0.4),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: MentionMode,
    pub mentions: MentionSource,
    pub epochs: usize,
    /// Mention pairs per gradient step (spans per step during pre-training).
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    /// Hidden width of both scorers.
    pub hidden: usize,
    pub width_dim: usize,
    pub max_span_width: Option<usize>,
    pub lambda: Option<f64>,
    pub tau: f64,
    pub neg_ratio: usize,
    pub pretrain_epochs: usize,
    pub pretrain_patience: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub ablations: Ablations,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: MentionMode::Event,
            mentions: MentionSource::Predicted,
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-4,
            dropout: 0.3,
            hidden: 1024,
            width_dim: crate::spans::WIDTH_DIM,
            max_span_width: None,
            lambda: None,
            tau: 0.75,
            neg_ratio: 20,
            pretrain_epochs: 10,
            pretrain_patience: 2,
            seed: 0,
            loss: LossKind::Bce,
            ablations: Ablations::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn max_span_width(&self) -> usize {
        self.max_span_width.unwrap_or(mode_defaults(self.mode).0)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(mode_defaults(self.mode).1)
    }

    /// Copy with per-mode defaults filled in.
    pub fn resolved(&self) -> TrainConfig {
        TrainConfig {
            max_span_width: Some(self.max_span_width()),
            lambda: Some(self.lambda()),
            ..self.clone()
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs as f64),
            ("batch_size", self.batch_size as f64),
            ("learning_rate", self.learning_rate),
            ("hidden", self.hidden as f64),
            ("width_dim", self.width_dim as f64),
            ("max_span_width", self.max_span_width() as f64),
            ("lambda", self.lambda()),
            ("neg_ratio", self.neg_ratio as f64),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("`{name}` must be positive")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("`dropout` must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config("`tau` must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_mode() {
        let mut cfg = TrainConfig::default();
        assert_eq!((cfg.max_span_width(), cfg.lambda(), cfg.tau), (10, 0.25, 0.75));
        cfg.mode = MentionMode::Entity;
        assert_eq!((cfg.max_span_width(), cfg.lambda()), (15, 0.35));
        cfg.mode = MentionMode::All;
        assert_eq!((cfg.max_span_width(), cfg.lambda()), (15, 0.4));
        assert_eq!((cfg.batch_size, cfg.hidden, cfg.neg_ratio), (32, 1024, 20));
        assert_eq!(cfg.dropout, 0.3);
        assert_eq!(cfg.learning_rate, 1e-4);
    }

    #[test]
    fn toml_overrides_and_round_trip() {
        let cfg =
            TrainConfig::from_toml_str("mode = \"all\"\nlambda = 0.5\n[ablations]\nno_pretrain = true\n").unwrap();
        assert_eq!(cfg.mode, MentionMode::All);
        assert_eq!(cfg.lambda(), 0.5);
        assert_eq!(cfg.max_span_width(), 15);
        assert!(cfg.ablations.no_pretrain);
        let again = TrainConfig::from_toml_str(&cfg.resolved().to_toml_string()).unwrap();
        assert_eq!(again, cfg.resolved());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(TrainConfig::from_toml_str("epochs = 0").is_err());
        assert!(TrainConfig::from_toml_str("dropout = 1.0").is_err());
        assert!(TrainConfig::from_toml_str("tau = 2.0").is_err());
        assert!(TrainConfig::from_toml_str("unknown_key = 1").is_err());
        assert!(TrainConfig::from_toml_str("mode = \"cats\"").is_err());
    }
}
