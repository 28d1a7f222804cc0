//! CoNLL-U reader.
//!
//! `# newdoc` starts a document, `# newpar` a paragraph and a blank line ends
//! a sentence. An optional `# coherence = 1|2|3` comment after `# newdoc`
//! attaches a graded label (low, medium, high).

use std::fs;
use std::path::Path;

use super::gr::{ROOT, UD_V1_GR_TYPES};
use super::{CoherenceLabel, Corpus, Document, Origin, Sentence, Token};
use crate::error::{Error, Result};

const PASSIVE_SUBTYPES: [&str; 3] = ["nsubj:pass", "csubj:pass", "aux:pass"];

/// Lower-cases a DEPREL value. Subtypes are kept when they belong to the
/// known inventory and otherwise collapsed to their main type.
pub fn normalize_deprel(raw: &str) -> String {
    let lower = raw.to_lowercase();
    match lower.split_once(':') {
        Some((main, _))
            if !UD_V1_GR_TYPES.contains(&lower.as_str())
                && !PASSIVE_SUBTYPES.contains(&lower.as_str()) =>
        {
            main.to_string()
        }
        _ => lower,
    }
}

struct Builder {
    docs: Vec<Document>,
    paragraphs: Vec<Vec<Sentence>>,
    sentence: Sentence,
    id: Option<String>,
    label: CoherenceLabel,
    stem: String,
}

impl Builder {
    fn end_sentence(&mut self) {
        if !self.sentence.is_empty() {
            if self.paragraphs.is_empty() {
                self.paragraphs.push(Vec::new());
            }
            let s = std::mem::take(&mut self.sentence);
            self.paragraphs.last_mut().expect("paragraph").push(s);
        }
    }

    fn new_paragraph(&mut self) {
        self.end_sentence();
        if self.paragraphs.last().is_some_and(|p| !p.is_empty()) {
            self.paragraphs.push(Vec::new());
        }
    }

    fn end_document(&mut self) {
        self.end_sentence();
        let mut paragraphs = std::mem::take(&mut self.paragraphs);
        paragraphs.retain(|p| !p.is_empty());
        let label = std::mem::replace(&mut self.label, CoherenceLabel::COHERENT);
        let id = self.id.take();
        if paragraphs.is_empty() {
            return;
        }
        let id = id.unwrap_or_else(|| format!("{}-{}", self.stem, self.docs.len()));
        self.docs.push(Document {
            id,
            label,
            paragraphs,
            origin: Origin::Original,
        });
    }
}

fn comment_value<'a>(comment: &'a str, key: &str) -> Option<&'a str> {
    let rest = comment.strip_prefix(key)?.trim_start();
    Some(rest.strip_prefix('=').unwrap_or(rest).trim())
}

/// Parses CoNLL-U text; `origin` names the source in error messages and
/// generated document ids.
pub fn parse_conllu(text: &str, origin: &Path) -> Result<Corpus> {
    let stem = origin
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("doc")
        .to_string();
    let mut b = Builder {
        docs: Vec::new(),
        paragraphs: Vec::new(),
        sentence: Vec::new(),
        id: None,
        label: CoherenceLabel::COHERENT,
        stem,
    };
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            b.end_sentence();
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(value) = comment_value(comment, "newdoc") {
                b.end_document();
                let value = comment_value(value, "id").unwrap_or(value);
                if !value.is_empty() {
                    b.id = Some(value.to_string());
                }
            } else if comment.starts_with("newpar") {
                b.new_paragraph();
            } else if let Some(value) = comment_value(comment, "coherence") {
                let label = match value {
                    "1" => CoherenceLabel::Graded(0),
                    "2" => CoherenceLabel::Graded(1),
                    "3" => CoherenceLabel::Graded(2),
                    other => {
                        return Err(parse_err(
                            line_no,
                            format!("invalid coherence rating `{other}`"),
                        ))
                    }
                };
                b.label = label;
            }
            continue;
        }

        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(parse_err(
                line_no,
                format!("expected 10 tab-separated columns, found {}", cols.len()),
            ));
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        if id.parse::<usize>().is_err() {
            return Err(parse_err(line_no, format!("invalid token id `{id}`")));
        }
        let gr = if cols[6] == "0" {
            Some(ROOT.to_string())
        } else if cols[7] == "_" {
            None
        } else {
            Some(normalize_deprel(cols[7]))
        };
        b.sentence.push(Token {
            surface: cols[1].to_string(),
            gr,
        });
    }
    b.end_document();
    Ok(Corpus::new(b.docs))
}

pub fn ingest_conllu(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conllu(&text, path)
}
