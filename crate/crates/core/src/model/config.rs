use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{Corpus, GrMode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "STL")]
    Stl,
    #[serde(rename = "MTL")]
    Mtl,
    #[serde(rename = "MTL_SOX")]
    MtlSox,
    #[serde(rename = "CONCAT_GRS")]
    ConcatGrs,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Stl,
        Variant::Mtl,
        Variant::MtlSox,
        Variant::ConcatGrs,
    ];

    /// Whether the variant trains a word-level GR prediction head.
    pub fn has_gr_head(self) -> bool {
        matches!(self, Variant::Mtl | Variant::MtlSox)
    }

    /// Whether GR labels are consumed at all (as targets or as inputs).
    pub fn uses_grs(self) -> bool {
        self != Variant::Stl
    }

    pub fn gr_mode(self) -> GrMode {
        match self {
            Variant::MtlSox => GrMode::Sox,
            _ => GrMode::Full,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Stl => "STL",
            Variant::Mtl => "MTL",
            Variant::MtlSox => "MTL_SOX",
            Variant::ConcatGrs => "CONCAT_GRS",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a sequence of Bi-LSTM states is summarised into one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Attention,
    /// `[last forward state ; first backward state]`.
    FinalState,
}

fn default_true() -> bool {
    true
}

fn default_gr_embed_dim() -> usize {
    10
}

fn default_aggregation() -> Aggregation {
    Aggregation::Attention
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceModelConfig {
    pub variant: Variant,
    /// 2: word, sentence, document. 3: adds a paragraph level.
    pub levels: u8,
    pub embed_dim: usize,
    pub word_hidden: usize,
    pub sent_hidden: usize,
    /// Only read when `levels == 3`.
    pub para_hidden: usize,
    /// 1 for the binary task, otherwise the number of graded classes.
    pub num_classes: usize,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "default_gr_embed_dim")]
    pub gr_embed_dim: usize,
    #[serde(default = "default_aggregation")]
    pub aggregation: Aggregation,
    /// Attention projection width; the state width when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub att_dim: Option<usize>,
    #[serde(default = "default_true")]
    pub dropout_words: bool,
    #[serde(default = "default_true")]
    pub dropout_sentences: bool,
    #[serde(default = "default_true")]
    pub trainable_embeddings: bool,
}

impl Default for CoherenceModelConfig {
    fn default() -> Self {
        CoherenceModelConfig {
            variant: Variant::Mtl,
            levels: 2,
            embed_dim: 50,
            word_hidden: 100,
            sent_hidden: 100,
            para_hidden: 100,
            num_classes: 1,
            alpha: 0.7,
            beta: 0.3,
            gr_embed_dim: default_gr_embed_dim(),
            aggregation: Aggregation::Attention,
            att_dim: None,
            dropout_words: true,
            dropout_sentences: true,
            trainable_embeddings: true,
        }
    }
}

impl CoherenceModelConfig {
    /// A small configuration for tests and quick experiments.
    pub fn tiny(variant: Variant) -> Self {
        CoherenceModelConfig {
            variant,
            embed_dim: 4,
            word_hidden: 3,
            sent_hidden: 3,
            para_hidden: 3,
            alpha: 1.0,
            beta: if variant.has_gr_head() { 0.5 } else { 0.0 },
            gr_embed_dim: 2,
            ..Self::default()
        }
    }

    pub fn is_binary(&self) -> bool {
        self.num_classes == 1
    }

    /// Width of the document vector.
    pub fn doc_dim(&self) -> usize {
        if self.levels == 3 {
            2 * self.para_hidden
        } else {
            2 * self.sent_hidden
        }
    }

    pub fn word_input_dim(&self) -> usize {
        match self.variant {
            Variant::ConcatGrs => self.embed_dim + self.gr_embed_dim,
            _ => self.embed_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.levels, 2 | 3) {
            return Err(Error::config(
                "levels",
                format!("must be 2 or 3, got {}", self.levels),
            ));
        }
        let mut dims = vec![
            ("embed_dim", self.embed_dim),
            ("word_hidden", self.word_hidden),
            ("sent_hidden", self.sent_hidden),
            ("num_classes", self.num_classes),
        ];
        if self.levels == 3 {
            dims.push(("para_hidden", self.para_hidden));
        }
        if self.variant == Variant::ConcatGrs {
            dims.push(("gr_embed_dim", self.gr_embed_dim));
        }
        if let Some(a) = self.att_dim {
            dims.push(("att_dim", a));
        }
        for (field, v) in dims {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        for (field, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(field, format!("{v} is not in [0, 1]")));
            }
        }
        if !self.variant.has_gr_head() && self.beta != 0.0 {
            return Err(Error::config(
                "beta",
                format!("must be 0 for {} (no GR prediction head)", self.variant),
            ));
        }
        Ok(())
    }

    /// Checks the configuration against the corpus it will be trained on.
    pub fn validate_for(&self, corpus: &Corpus) -> Result<()> {
        self.validate()?;
        if self.levels == 3 && !corpus.has_paragraph_structure() {
            return Err(Error::config(
                "levels",
                "3 levels need documents with paragraph boundaries",
            ));
        }
        let graded = corpus.is_graded();
        if graded && self.is_binary() {
            return Err(Error::config(
                "num_classes",
                "graded corpus needs num_classes >= 2",
            ));
        }
        if !graded && !self.is_binary() {
            return Err(Error::config(
                "num_classes",
                "binary corpus needs num_classes = 1",
            ));
        }
        Ok(())
    }
}
