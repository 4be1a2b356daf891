//! Training configuration and the key-value config file format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, TagInventories};
use crate::error::{Error, Result};
use crate::model::{CrfMode, ModelConfig, Variant};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    pub alpha: f64,
    pub learning_rate: f64,
    /// Gradient-accumulation window, counted in relation slots.
    pub window_slots: usize,
    pub max_epochs: usize,
    pub dropout: f64,
    pub dropout_after_pool: bool,
    pub clip_threshold: f64,
    pub hidden: usize,
    pub word_dim: usize,
    pub seed: u64,
    pub crf: CrfMode,
    /// One-vs-all binary target; forbids the CRF.
    pub binary: Option<Label>,
}

impl TrainConfig {
    /// Defaults for a variant: the published training protocol, with the
    /// CRF mode implied by the variant.
    pub fn new(variant: Variant) -> Self {
        TrainConfig {
            variant,
            alpha: 1.0,
            learning_rate: 5e-4,
            window_slots: 128,
            max_epochs: 40,
            dropout: 0.5,
            dropout_after_pool: true,
            clip_threshold: 5.0,
            hidden: 300,
            word_dim: 300,
            seed: 0,
            crf: if variant == Variant::UntiedCrf { CrfMode::Typed8 } else { CrfMode::Off },
            binary: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if self.window_slots == 0 {
            return Err(Error::Config("window_slots must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be positive".into()));
        }
        if self.clip_threshold <= 0.0 {
            return Err(Error::Config(format!("clip_threshold {} must be positive", self.clip_threshold)));
        }
        // Architecture-level rules (CRF requires untied, binary forbids
        // CRF, dropout range) live with the model config.
        self.to_model_config(&TagInventories::default_sizes()).validate()
    }

    pub fn to_model_config(&self, inventories: &TagInventories) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            hidden_dim: self.hidden,
            word_dim: self.word_dim,
            pos_count: inventories.pos.len(),
            ner_count: inventories.ner.len(),
            alpha: self.alpha,
            dropout: self.dropout,
            dropout_after_pool: self.dropout_after_pool,
            crf: self.crf,
            binary_target: self.binary,
            embedding_seed: self.seed,
        }
    }

    /// Apply one `key = value` assignment using the field names of this
    /// struct.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad value '{value}' for {what}"));
        match key {
            "variant" => self.variant = Variant::parse(value).ok_or_else(|| bad("variant"))?,
            "alpha" => self.alpha = value.parse().map_err(|_| bad("alpha"))?,
            "learning_rate" => self.learning_rate = value.parse().map_err(|_| bad("learning_rate"))?,
            "window_slots" => self.window_slots = value.parse().map_err(|_| bad("window_slots"))?,
            "max_epochs" => self.max_epochs = value.parse().map_err(|_| bad("max_epochs"))?,
            "dropout" => self.dropout = value.parse().map_err(|_| bad("dropout"))?,
            "dropout_after_pool" => {
                self.dropout_after_pool = value.parse().map_err(|_| bad("dropout_after_pool"))?
            }
            "clip_threshold" => self.clip_threshold = value.parse().map_err(|_| bad("clip_threshold"))?,
            "hidden" => self.hidden = value.parse().map_err(|_| bad("hidden"))?,
            "word_dim" => self.word_dim = value.parse().map_err(|_| bad("word_dim"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "crf" => self.crf = CrfMode::parse(value).ok_or_else(|| bad("crf"))?,
            "binary" => {
                self.binary = if value.is_empty() || value == "none" {
                    None
                } else {
                    Some(Label::parse(value).ok_or_else(|| bad("binary"))?)
                }
            }
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Read a key-value config file: `key = value` lines, `#` comments.
    /// `variant` is applied first so that later keys override its
    /// implied CRF mode.
    pub fn from_file(path: &Path) -> Result<TrainConfig> {
        let text = fs::read_to_string(path)?;
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config(format!(
                "config line {} is not 'key = value': '{}'",
                line_no + 1,
                raw.trim()
            )))?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        let variant = pairs
            .iter()
            .find(|(k, _)| k == "variant")
            .map(|(_, v)| Variant::parse(v).ok_or_else(|| Error::Config(format!("bad value '{v}' for variant"))))
            .transpose()?
            .unwrap_or(Variant::Untied);
        let mut config = TrainConfig::new(variant);
        for (key, value) in &pairs {
            if key != "variant" {
                config.set(key, value)?;
            }
        }
        config.validate()?;
        Ok(config)
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::new(Variant::Untied)
    }
}
