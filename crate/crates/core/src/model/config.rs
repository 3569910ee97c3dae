use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::LinearizeMode;

/// Graph-transformer decoding variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Node decoder, biaffine arcs, biaffine labels.
    #[serde(rename = "nd-bd-bd")]
    NdBdBd,
    /// Node decoder, attention arcs, biaffine labels.
    #[serde(rename = "nd-ad-bd")]
    NdAdBd,
    /// Levi-graph node decoder over concepts and labels, attention arcs.
    #[serde(rename = "nd-ad-lv")]
    NdAdLv,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::NdBdBd, Variant::NdAdBd, Variant::NdAdLv];

    pub fn mode(self) -> LinearizeMode {
        match self {
            Variant::NdAdLv => LinearizeMode::Levi,
            _ => LinearizeMode::Concepts,
        }
    }

    pub fn uses_biaffine(self) -> bool {
        self != Variant::NdAdLv
    }

    pub fn attention_arcs(self) -> bool {
        self != Variant::NdBdBd
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::NdBdBd => "nd-bd-bd",
            Variant::NdAdBd => "nd-ad-bd",
            Variant::NdAdLv => "nd-ad-lv",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                format!("unknown variant `{s}` (expected nd-bd-bd, nd-ad-bd or nd-ad-lv)")
            })
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("config TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Model dimensions and decoding settings. Defaults follow the published
/// hyper-parameter table; the word embedding stands in for the pretrained
/// text encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParserConfig {
    pub variant: Variant,
    pub d: usize,
    pub heads: usize,
    pub text_layers: usize,
    pub graph_layers: usize,
    pub gt_layers: usize,
    pub ff_hidden: usize,
    pub gt_ff_hidden: usize,
    pub biaffine_hidden: usize,
    pub word_dim: usize,
    pub lemma_dim: usize,
    pub pos_dim: usize,
    pub ner_dim: usize,
    pub concept_dim: usize,
    pub char_dim: usize,
    pub char_filters: usize,
    pub char_ngram: usize,
    pub char_out: usize,
    pub arc_threshold: f64,
    pub max_decode_len: usize,
    pub layer_norm_eps: f64,
}

impl Default for ParserConfig {
    fn default() -> Self {
        ParserConfig {
            variant: Variant::NdAdLv,
            d: 512,
            heads: 8,
            text_layers: 4,
            graph_layers: 2,
            gt_layers: 2,
            ff_hidden: 1024,
            gt_ff_hidden: 1024,
            biaffine_hidden: 100,
            word_dim: 300,
            lemma_dim: 300,
            pos_dim: 32,
            ner_dim: 16,
            concept_dim: 300,
            char_dim: 32,
            char_filters: 256,
            char_ngram: 3,
            char_out: 128,
            arc_threshold: 0.5,
            max_decode_len: 100,
            layer_norm_eps: 1e-5,
        }
    }
}

impl ParserConfig {
    /// Desk-scale dimensions: widths shrink with `d`, layer counts stay.
    pub fn toy(variant: Variant, d: usize, heads: usize) -> Self {
        let q = (d / 2).max(4);
        ParserConfig {
            variant,
            d,
            heads,
            ff_hidden: 2 * d,
            gt_ff_hidden: 2 * d,
            biaffine_hidden: q,
            word_dim: q,
            lemma_dim: q,
            pos_dim: (d / 8).max(2),
            ner_dim: (d / 8).max(2),
            concept_dim: q,
            char_dim: (d / 8).max(2),
            char_filters: q,
            char_out: (d / 4).max(2),
            max_decode_len: 60,
            ..ParserConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.d == 0 || self.heads == 0 {
            return bad("d and heads must be positive");
        }
        if !self.d.is_multiple_of(self.heads) {
            return bad("d must be divisible by heads");
        }
        if self.char_ngram.is_multiple_of(2) {
            return bad("char_ngram must be odd");
        }
        if self.gt_layers == 0 {
            return bad("gt_layers must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.arc_threshold) {
            return bad("arc_threshold must lie in [0, 1]");
        }
        Ok(())
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ParserConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
