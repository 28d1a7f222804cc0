//! Ranking and classification metrics, score/order correlation, per-class
//! F1 and gradient saliency.

mod metrics;
mod saliency;

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use metrics::{
    accuracy_3way, accuracy_counts, argmax, f1_per_class, pearson, pra, pra_counts,
    similarity_from_transpositions, tpra, tpra_counts, Counts, F1Score, ScoredGroup,
};
pub use saliency::{saliency, saliency_html, TokenSaliency};

use crate::data::{min_adjacent_transpositions, reduce_sox, Corpus, GrVocabulary, Origin, Sox};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Pra,
    Tpra,
    Accuracy,
    /// Score against normalised transposition similarity.
    Pearson,
    /// Score against the raw inversion count.
    PearsonRaw,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_lowercase().as_str() {
            "pra" => Metric::Pra,
            "tpra" => Metric::Tpra,
            "accuracy" | "acc" => Metric::Accuracy,
            "pearson" => Metric::Pearson,
            "pearson_raw" => Metric::PearsonRaw,
            other => {
                return Err(Error::config(
                    "metrics",
                    format!("unknown metric `{other}`"),
                ))
            }
        })
    }
}

/// Parses a comma-separated metric list.
pub fn parse_metrics(list: &str) -> Result<Vec<Metric>> {
    let mut out: Vec<Metric> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(Error::config("metrics", "no metric requested"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentSaliency {
    pub doc_id: String,
    pub tokens: Vec<TokenSaliency>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pra: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tpra: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pearson_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pearson_r_raw: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub f1_per_class: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub saliency: Vec<DocumentSaliency>,
    /// Totals behind each ratio, e.g. `pra_correct` / `pra_pairs`.
    #[serde(default)]
    pub counts: BTreeMap<String, u64>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Groups first-class scores (`scores[i][0]`) by original document.
pub fn scored_groups(corpus: &Corpus, scores: &[Vec<f64>]) -> Result<Vec<ScoredGroup>> {
    if scores.len() != corpus.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: corpus.len(),
        });
    }
    Ok(corpus
        .ranking_groups()
        .into_iter()
        .filter(|(_, perms)| !perms.is_empty())
        .map(|(o, perms)| (scores[o][0], perms.iter().map(|&p| scores[p][0]).collect()))
        .collect())
}

/// `(similarity, inversions, score)` for every permuted document.
pub fn transposition_points(corpus: &Corpus, scores: &[Vec<f64>]) -> Result<Vec<(f64, u64, f64)>> {
    let mut out = Vec::new();
    for (doc, s) in corpus.iter().zip(scores) {
        if let Origin::Permutation { order, .. } = &doc.origin {
            let identity: Vec<usize> = (0..order.len()).collect();
            out.push((
                similarity_from_transpositions(order, &identity)?,
                min_adjacent_transpositions(order, &identity)?,
                s[0],
            ));
        }
    }
    Ok(out)
}

/// Computes the requested document-level metrics from per-document scores.
pub fn evaluate(corpus: &Corpus, scores: &[Vec<f64>], metrics: &[Metric]) -> Result<EvalReport> {
    if scores.len() != corpus.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: corpus.len(),
        });
    }
    let mut r = EvalReport::default();
    r.counts.insert("documents".into(), corpus.len() as u64);
    for m in metrics {
        match m {
            Metric::Pra => {
                let c = pra_counts(&scored_groups(corpus, scores)?)?;
                r.pra = Some(c.ratio());
                r.counts.insert("pra_correct".into(), c.correct);
                r.counts.insert("pra_pairs".into(), c.total);
            }
            Metric::Tpra => {
                let c = tpra_counts(&scored_groups(corpus, scores)?)?;
                r.tpra = Some(c.ratio());
                r.counts.insert("tpra_correct".into(), c.correct);
                r.counts.insert("tpra_pairs".into(), c.total);
            }
            Metric::Accuracy => {
                let gold: Vec<usize> = corpus.iter().map(|d| d.label.class_index()).collect();
                let pred: Vec<usize> = scores.iter().map(|s| argmax(s)).collect();
                let c = accuracy_counts(&gold, &pred)?;
                r.accuracy = Some(c.ratio());
                r.counts.insert("accuracy_correct".into(), c.correct);
                r.counts.insert("accuracy_total".into(), c.total);
            }
            Metric::Pearson | Metric::PearsonRaw => {
                let pts = transposition_points(corpus, scores)?;
                let y: Vec<f64> = pts.iter().map(|p| p.2).collect();
                if *m == Metric::Pearson {
                    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
                    r.pearson_r = Some(pearson(&x, &y)?);
                } else {
                    let x: Vec<f64> = pts.iter().map(|p| p.1 as f64).collect();
                    r.pearson_r_raw = Some(pearson(&x, &y)?);
                }
                r.counts.insert("pearson_points".into(), pts.len() as u64);
            }
        }
    }
    Ok(r)
}

/// Subject and object F1 after reducing gold and predicted labels to S/O/X.
/// Only tokens with a known gold label are scored.
pub fn subject_object_f1(gold: &[Option<&str>], pred: &[&str]) -> Result<(F1Score, F1Score)> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    let (g, p): (Vec<Sox>, Vec<Sox>) = gold
        .iter()
        .zip(pred)
        .filter_map(|(g, p)| Some((reduce_sox(g.as_ref()?), reduce_sox(p))))
        .unzip();
    Ok((
        f1_per_class(&g, &p, &Sox::S)?,
        f1_per_class(&g, &p, &Sox::O)?,
    ))
}

/// Per-class F1 in the vocabulary's own label space, keyed by class name,
/// plus reduced `S` / `O` entries for full vocabularies.
pub fn gr_f1_report(
    vocab: &GrVocabulary,
    gold: &[Option<usize>],
    pred: &[usize],
    gold_labels: &[Option<&str>],
) -> Result<BTreeMap<String, f64>> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    let (g, p): (Vec<usize>, Vec<usize>) = gold
        .iter()
        .zip(pred)
        .filter_map(|(g, &p)| Some(((*g)?, p)))
        .unzip();
    let mut out = BTreeMap::new();
    for (c, name) in vocab.classes().iter().enumerate() {
        let s = f1_per_class(&g, &p, &c)?;
        if !s.undefined {
            out.insert(name.clone(), s.f1);
        }
    }
    if vocab.mode() == crate::data::GrMode::Full {
        let names: Vec<&str> = pred.iter().map(|&c| vocab.name(c)).collect();
        let (s, o) = subject_object_f1(gold_labels, &names)?;
        out.insert("S".into(), s.f1);
        out.insert("O".into(), o.f1);
    }
    Ok(out)
}
