//! Synthetic corpora for desk-scale experiments.
//!
//! Each coherent document is one walk through a sparse Markov chain over the
//! vocabulary (every word has two possible successors), cut into sentences.
//! The walk continues across sentence boundaries, so reordering sentences
//! introduces transitions the chain never produces. Grammatical roles are a
//! pure function of the token position inside its sentence.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CoherenceLabel, Corpus, Document, Origin, Sentence, Token};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Position {
    First,
    Last,
    Index(usize),
}

/// Position pattern to GR mapping, e.g. `first-token=nsubj, last=punct, else=amod`.
/// Rules are tried in the order written; `else` is required.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GrRule {
    rules: Vec<(Position, String)>,
    fallback: String,
}

impl GrRule {
    pub fn label(&self, position: usize, sentence_len: usize) -> &str {
        self.rules
            .iter()
            .find(|(p, _)| match *p {
                Position::First => position == 0,
                Position::Last => position + 1 == sentence_len,
                Position::Index(i) => position == i,
            })
            .map(|(_, gr)| gr.as_str())
            .unwrap_or(&self.fallback)
    }

    /// Largest explicit index the rule mentions, plus one.
    fn min_sentence_len(&self) -> usize {
        self.rules
            .iter()
            .filter_map(|(p, _)| match p {
                Position::Index(i) => Some(i + 1),
                _ => None,
            })
            .max()
            .unwrap_or(1)
    }
}

impl FromStr for GrRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut rules = Vec::new();
        let mut fallback = None;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (pos, gr) = part.split_once('=').ok_or_else(|| {
                Error::config(
                    "gr_rule",
                    format!("`{part}` is not of the form position=label"),
                )
            })?;
            let (pos, gr) = (pos.trim(), gr.trim());
            if gr.is_empty() {
                return Err(Error::config("gr_rule", format!("empty label in `{part}`")));
            }
            let position = match pos {
                "first" | "first-token" => Position::First,
                "last" | "last-token" => Position::Last,
                "else" => {
                    fallback = Some(gr.to_string());
                    continue;
                }
                other => Position::Index(other.parse().map_err(|_| {
                    Error::config("gr_rule", format!("unknown position `{other}`"))
                })?),
            };
            rules.push((position, gr.to_string()));
        }
        let fallback =
            fallback.ok_or_else(|| Error::config("gr_rule", "an `else=` entry is required"))?;
        Ok(GrRule { rules, fallback })
    }
}

impl fmt::Display for GrRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (p, gr) in &self.rules {
            match p {
                Position::First => write!(f, "first={gr},")?,
                Position::Last => write!(f, "last={gr},")?,
                Position::Index(i) => write!(f, "{i}={gr},")?,
            }
        }
        write!(f, "else={}", self.fallback)
    }
}

impl TryFrom<String> for GrRule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GrRule> for String {
    fn from(r: GrRule) -> String {
        r.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub num_docs: usize,
    pub vocab_size: usize,
    pub sents_per_doc: usize,
    pub words_per_sent: usize,
    pub gr_rule: GrRule,
    pub seed: u64,
    /// Groups sentences into paragraphs of this size when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sents_per_paragraph: Option<usize>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_docs: 20,
            vocab_size: 50,
            sents_per_doc: 5,
            words_per_sent: 6,
            gr_rule: "first=nsubj,last=punct,else=amod"
                .parse()
                .expect("valid rule"),
            seed: 0,
            sents_per_paragraph: None,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("num_docs", self.num_docs),
            ("vocab_size", self.vocab_size),
            ("sents_per_doc", self.sents_per_doc),
            ("words_per_sent", self.words_per_sent),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if self.sents_per_paragraph == Some(0) {
            return Err(Error::config("sents_per_paragraph", "must be positive"));
        }
        let needed = self.words_per_sent.max(2);
        if self.vocab_size < needed {
            return Err(Error::config(
                "vocab_size",
                format!(
                    "{} is smaller than the {needed} words required",
                    self.vocab_size
                ),
            ));
        }
        if self.gr_rule.min_sentence_len() > self.words_per_sent {
            return Err(Error::config(
                "gr_rule",
                format!(
                    "refers to position {} but sentences have {} words",
                    self.gr_rule.min_sentence_len() - 1,
                    self.words_per_sent
                ),
            ));
        }
        Ok(())
    }
}

pub fn synth_corpus(spec: &SynthSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let v = spec.vocab_size;
    // two distinct successors per word, never the word itself when avoidable
    let successors: Vec<[usize; 2]> = (0..v)
        .map(|w| {
            let a = (w + rng.gen_range(1..v)) % v;
            let mut b = (w + rng.gen_range(1..v)) % v;
            if v > 2 {
                while b == a {
                    b = (w + rng.gen_range(1..v)) % v;
                }
            }
            [a, b]
        })
        .collect();

    let documents = (0..spec.num_docs)
        .map(|d| {
            let mut word = rng.gen_range(0..v);
            let sentences: Vec<Sentence> = (0..spec.sents_per_doc)
                .map(|_| {
                    (0..spec.words_per_sent)
                        .map(|pos| {
                            let token = Token {
                                surface: format!("w{word}"),
                                gr: Some(spec.gr_rule.label(pos, spec.words_per_sent).to_string()),
                            };
                            word = successors[word][rng.gen_range(0..2)];
                            token
                        })
                        .collect()
                })
                .collect();
            let paragraphs = match spec.sents_per_paragraph {
                Some(p) => sentences.chunks(p).map(<[Sentence]>::to_vec).collect(),
                None => vec![sentences],
            };
            Document {
                id: format!("synth-{d}"),
                label: CoherenceLabel::COHERENT,
                paragraphs,
                origin: Origin::Original,
            }
        })
        .collect();
    Ok(Corpus::new(documents))
}
