use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::error::{Error, Result};

/// The 39 Universal Dependencies (v1) relation types and language-specific
/// subtypes produced by the Stanford parser on newswire text.
pub const UD_V1_GR_TYPES: [&str; 39] = [
    "acl",
    "acl:relcl",
    "advcl",
    "advmod",
    "amod",
    "appos",
    "aux",
    "auxpass",
    "case",
    "cc",
    "cc:preconj",
    "ccomp",
    "compound",
    "compound:prt",
    "conj",
    "cop",
    "csubj",
    "csubjpass",
    "dep",
    "det",
    "det:predet",
    "discourse",
    "dobj",
    "expl",
    "iobj",
    "mark",
    "mwe",
    "neg",
    "nmod",
    "nmod:tmod",
    "nmod:poss",
    "nmod:npmod",
    "nsubj",
    "nsubjpass",
    "nummod",
    "parataxis",
    "punct",
    "root",
    "xcomp",
];

pub const ROOT: &str = "root";

/// Subject / object / other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sox {
    S,
    O,
    X,
}

impl Sox {
    pub fn as_str(self) -> &'static str {
        match self {
            Sox::S => "S",
            Sox::O => "O",
            Sox::X => "X",
        }
    }
}

impl fmt::Display for Sox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Collapses a relation label to subject, object or other. Passive subjects
/// count as objects. The UD v2 spellings `obj`, `nsubj:pass` and
/// `csubj:pass` are accepted alongside the v1 labels.
pub fn reduce_sox(gr: &str) -> Sox {
    match gr {
        "nsubj" | "csubj" | "S" => Sox::S,
        "dobj" | "iobj" | "nsubjpass" | "csubjpass" | "obj" | "nsubj:pass" | "csubj:pass" | "O" => {
            Sox::O
        }
        _ => Sox::X,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrMode {
    Full,
    Sox,
}

/// Closed, ordered set of grammatical-role classes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GrVocabularyRepr")]
pub struct GrVocabulary {
    classes: Vec<String>,
    mode: GrMode,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct GrVocabularyRepr {
    classes: Vec<String>,
    mode: GrMode,
}

impl TryFrom<GrVocabularyRepr> for GrVocabulary {
    type Error = Error;

    fn try_from(r: GrVocabularyRepr) -> Result<Self> {
        GrVocabulary::from_classes(r.classes, r.mode)
    }
}

impl PartialEq for GrVocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.classes == other.classes && self.mode == other.mode
    }
}

impl Eq for GrVocabulary {}

impl GrVocabulary {
    fn with_classes(classes: Vec<String>, mode: GrMode) -> Self {
        let index = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        GrVocabulary {
            classes,
            mode,
            index,
        }
    }

    /// Every label seen in `train` plus `root`, sorted.
    pub fn build_full(train: &Corpus) -> Self {
        let mut set: BTreeSet<String> = train
            .iter()
            .flat_map(|d| d.tokens())
            .filter_map(|t| t.gr.clone())
            .collect();
        set.insert(ROOT.to_string());
        Self::with_classes(set.into_iter().collect(), GrMode::Full)
    }

    pub fn sox() -> Self {
        Self::with_classes(vec!["S".into(), "O".into(), "X".into()], GrMode::Sox)
    }

    pub fn from_classes(classes: Vec<String>, mode: GrMode) -> Result<Self> {
        if mode == GrMode::Sox && classes != ["S", "O", "X"] {
            return Err(Error::InvalidInput(format!(
                "sox vocabulary must be [S, O, X], got {classes:?}"
            )));
        }
        if mode == GrMode::Full && !classes.iter().any(|c| c == ROOT) {
            return Err(Error::InvalidInput(
                "GR vocabulary must contain `root`".into(),
            ));
        }
        let v = Self::with_classes(classes, mode);
        if v.index.len() != v.classes.len() {
            return Err(Error::InvalidInput("duplicate GR classes".into()));
        }
        Ok(v)
    }

    pub fn mode(&self) -> GrMode {
        self.mode
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Class index of a raw relation label; `None` if outside the closed set.
    pub fn class_of(&self, gr: &str) -> Option<usize> {
        match self.mode {
            GrMode::Full => self.index.get(gr).copied(),
            GrMode::Sox => Some(reduce_sox(gr) as usize),
        }
    }

    pub fn name(&self, class: usize) -> &str {
        &self.classes[class]
    }
}
