//! Documents, corpora and the file formats they are read from.

mod conllu;
mod embeddings;
mod gr;
mod permute;
mod synth;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use conllu::{ingest_conllu, normalize_deprel, parse_conllu};
pub use embeddings::{load_embeddings, EmbeddingMatrix};
pub use gr::{reduce_sox, GrMode, GrVocabulary, Sox, UD_V1_GR_TYPES};
pub use permute::{
    generate_permutations, generate_permutations_with, min_adjacent_transpositions, permute_corpus,
    permuted_document, PermuteSummary,
};
pub use synth::{synth_corpus, GrRule, SynthSpec};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    /// Dependency relation to the head; `root` for the sentence head.
    pub gr: Option<String>,
}

impl Token {
    pub fn new(surface: impl Into<String>, gr: Option<&str>) -> Self {
        Token {
            surface: surface.into(),
            gr: gr.map(str::to_string),
        }
    }
}

// Tokens are written as `["form"]` or `["form", "deprel"]`.
impl Serialize for Token {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(1 + self.gr.is_some() as usize))?;
        seq.serialize_element(&self.surface)?;
        if let Some(gr) = &self.gr {
            seq.serialize_element(gr)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Token {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct TokenVisitor;
        impl<'de> Visitor<'de> for TokenVisitor {
            type Value = Token;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("[token] or [token, gr]")
            }
            fn visit_seq<A: SeqAccess<'de>>(
                self,
                mut seq: A,
            ) -> std::result::Result<Token, A::Error> {
                let surface: String = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let gr: Option<String> = seq.next_element::<Option<String>>()?.flatten();
                if seq.next_element::<de::IgnoredAny>()?.is_some() {
                    return Err(de::Error::invalid_length(3, &self));
                }
                Ok(Token { surface, gr })
            }
        }
        d.deserialize_seq(TokenVisitor)
    }
}

pub type Sentence = Vec<Token>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum CoherenceLabel {
    /// 1 = coherent, 0 = incoherent.
    Binary(u8),
    /// 0 = low, 1 = medium, 2 = high.
    Graded(u8),
}

impl CoherenceLabel {
    pub const COHERENT: CoherenceLabel = CoherenceLabel::Binary(1);
    pub const INCOHERENT: CoherenceLabel = CoherenceLabel::Binary(0);

    pub fn class_index(self) -> usize {
        match self {
            CoherenceLabel::Binary(v) | CoherenceLabel::Graded(v) => v as usize,
        }
    }

    pub fn validate(self) -> Result<()> {
        match self {
            CoherenceLabel::Binary(0 | 1) | CoherenceLabel::Graded(0..=2) => Ok(()),
            other => Err(Error::InvalidInput(format!("invalid label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Origin {
    Original,
    Permutation {
        of: String,
        index: usize,
        /// `order[i]` is the original position of the sentence now at `i`.
        order: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub label: CoherenceLabel,
    pub paragraphs: Vec<Vec<Sentence>>,
    pub origin: Origin,
}

impl Document {
    /// A single-paragraph coherent original.
    pub fn from_sentences(id: impl Into<String>, sentences: Vec<Sentence>) -> Self {
        Document {
            id: id.into(),
            label: CoherenceLabel::COHERENT,
            paragraphs: vec![sentences],
            origin: Origin::Original,
        }
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.paragraphs.iter().flatten()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences().flatten()
    }

    pub fn num_sentences(&self) -> usize {
        self.paragraphs.iter().map(Vec::len).sum()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences().map(Vec::len).sum()
    }

    pub fn has_paragraph_structure(&self) -> bool {
        self.paragraphs.len() > 1
    }

    pub fn is_original(&self) -> bool {
        self.origin == Origin::Original
    }

    /// Id of the original this document derives from (itself if original).
    pub fn root_id(&self) -> &str {
        match &self.origin {
            Origin::Original => &self.id,
            Origin::Permutation { of, .. } => of,
        }
    }

    /// Every paragraph and sentence is non-empty and there is at least one.
    pub fn validate(&self) -> Result<()> {
        self.label.validate()?;
        if self.num_sentences() == 0 {
            return Err(Error::InvalidInput(format!(
                "document `{}` has no sentences",
                self.id
            )));
        }
        if self.paragraphs.iter().any(Vec::is_empty) {
            return Err(Error::InvalidInput(format!(
                "document `{}` has an empty paragraph",
                self.id
            )));
        }
        if self.sentences().any(Vec::is_empty) {
            return Err(Error::InvalidInput(format!(
                "document `{}` has an empty sentence",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Self {
        Corpus { documents }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.documents.iter()
    }

    pub fn originals(&self) -> impl Iterator<Item = &Document> {
        self.documents.iter().filter(|d| d.is_original())
    }

    pub fn has_paragraph_structure(&self) -> bool {
        self.documents.iter().any(Document::has_paragraph_structure)
    }

    pub fn is_graded(&self) -> bool {
        self.documents
            .iter()
            .any(|d| matches!(d.label, CoherenceLabel::Graded(_)))
    }

    /// Groups document indices by original id, in first-appearance order:
    /// `(original index, permutation indices)`. Permutations whose original
    /// is absent are dropped.
    pub fn ranking_groups(&self) -> Vec<(usize, Vec<usize>)> {
        let mut order: Vec<&str> = Vec::new();
        let mut groups: BTreeMap<&str, (Option<usize>, Vec<usize>)> = BTreeMap::new();
        for (i, d) in self.documents.iter().enumerate() {
            let key = d.root_id();
            let entry = groups.entry(key).or_insert_with(|| {
                order.push(key);
                (None, Vec::new())
            });
            if d.is_original() {
                entry.0 = Some(i);
            } else {
                entry.1.push(i);
            }
        }
        order
            .into_iter()
            .filter_map(|k| match groups.remove(k) {
                Some((Some(o), perms)) => Some((o, perms)),
                _ => None,
            })
            .collect()
    }

    pub fn avg_sentences(&self) -> f64 {
        if self.documents.is_empty() {
            return 0.0;
        }
        self.documents
            .iter()
            .map(|d| d.num_sentences())
            .sum::<usize>() as f64
            / self.documents.len() as f64
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut documents = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let doc: Document = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })?;
            doc.validate().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })?;
            documents.push(doc);
        }
        Ok(Corpus { documents })
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for d in &self.documents {
            out.push_str(&serde_json::to_string(d)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for d in &self.documents {
            serde_json::to_writer(&mut w, d)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads `.conllu` files with the CoNLL-U reader and anything else as JSONL.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        match path.extension().and_then(|e| e.to_str()) {
            Some("conllu") | Some("conll") => ingest_conllu(path),
            _ => Corpus::read_jsonl(path),
        }
    }
}
