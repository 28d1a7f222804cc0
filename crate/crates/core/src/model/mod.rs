//! Hierarchical Bi-LSTM coherence scorer with an optional word-level
//! grammatical-role head.
//!
//! Words are embedded and read by a Bi-LSTM whose states are pooled into
//! sentence vectors; a second Bi-LSTM over sentence vectors is pooled into
//! the document vector (with a paragraph level in between for 3-level
//! models). The document vector is mapped to per-class sigmoid scores.

mod checkpoint;
mod config;
mod loss;

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_VERSION};
pub use config::{Aggregation, CoherenceModelConfig, Variant};
pub use loss::{combine_losses, loss_binary, loss_gr, loss_multiclass, loss_total, SCORE_EPS};

use crate::autograd::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::data::{CoherenceLabel, Corpus, Document, EmbeddingMatrix, GrMode, GrVocabulary};
use crate::error::{Error, Result};
use crate::layers::{
    attention_pool, bilstm_states, dropout, linear, AttentionParams, BiLstmStates, BoundAttention,
    BoundLstm, EmbeddingTable, LstmParams,
};

/// Vocabulary entry shared by every word without its own row.
pub const UNK: &str = "<unk>";

/// Lower-cased corpus vocabulary, `UNK` first and the rest sorted.
pub fn build_word_vocab(corpus: &Corpus) -> Vec<String> {
    let words: BTreeSet<String> = corpus
        .iter()
        .flat_map(|d| d.tokens())
        .map(|t| t.surface.to_lowercase())
        .filter(|w| w != UNK)
        .collect();
    std::iter::once(UNK.to_string()).chain(words).collect()
}

/// Training-time dropout: the rate and the run's mask generator.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

fn maybe_dropout(
    tape: &mut Tape,
    x: Var,
    on: bool,
    d: &mut Option<&mut Dropout<'_>>,
) -> Result<Var> {
    match d {
        Some(d) if on => dropout(tape, x, d.rate, true, d.rng),
        _ => Ok(x),
    }
}

/// `σ(W_d d)`: one independent score per class.
pub fn score_coherence(tape: &mut Tape, d: Var, w_d: Var) -> Result<Var> {
    let logits = linear(tape, d, w_d, None)?;
    tape.sigmoid(logits)
}

/// `softmax(W_r h)` for each word state.
pub fn gr_distributions(tape: &mut Tape, word_states: &[Var], w_r: Var) -> Result<Vec<Var>> {
    word_states
        .iter()
        .map(|&h| {
            let logits = linear(tape, h, w_r, None)?;
            tape.softmax(logits)
        })
        .collect()
}

/// Attention weights recorded during one forward pass.
#[derive(Debug, Clone, Default)]
pub struct AttentionTrace {
    /// One weight vector per sentence.
    pub word: Vec<Var>,
    /// One per document (2 levels) or per paragraph (3 levels).
    pub sentence: Vec<Var>,
    pub paragraph: Option<Var>,
}

impl AttentionTrace {
    pub fn all(&self) -> impl Iterator<Item = Var> + '_ {
        self.word
            .iter()
            .chain(&self.sentence)
            .chain(&self.paragraph)
            .copied()
    }
}

#[derive(Debug, Clone)]
pub struct Encoded {
    pub doc_vector: Var,
    /// `h_t^w` for every token, in document order.
    pub word_states: Vec<Var>,
    pub attention: AttentionTrace,
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub score: Var,
    /// Per-token GR distributions; empty for variants without a GR head.
    pub gr: Vec<Var>,
    pub encoded: Encoded,
}

#[derive(Debug, Clone)]
pub struct DocumentLoss {
    pub total: Var,
    pub coherence: Var,
    pub gr: Option<Var>,
    pub forward: Forward,
}

/// Plain-value result of scoring one document.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherencePrediction {
    pub score: Vec<f64>,
    pub gr: Option<Vec<Vec<f64>>>,
    pub doc_vector: Vec<f64>,
    pub attention: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct Level {
    fwd: LstmParams,
    bwd: LstmParams,
    att: Option<AttentionParams>,
}

struct BoundLevel {
    fwd: BoundLstm,
    bwd: BoundLstm,
    att: Option<BoundAttention>,
}

impl Level {
    fn register(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        cfg: &CoherenceModelConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        LstmParams::register(store, &format!("{prefix}.fwd"), input, hidden, rng)?;
        LstmParams::register(store, &format!("{prefix}.bwd"), input, hidden, rng)?;
        if cfg.aggregation == Aggregation::Attention {
            let state = 2 * hidden;
            let att = cfg.att_dim.unwrap_or(state);
            AttentionParams::register(store, &format!("{prefix}.att"), state, att, rng)?;
        }
        Ok(())
    }

    fn from_store(store: &ParamStore, prefix: &str, cfg: &CoherenceModelConfig) -> Result<Self> {
        Ok(Level {
            fwd: LstmParams::from_store(store, &format!("{prefix}.fwd"))?,
            bwd: LstmParams::from_store(store, &format!("{prefix}.bwd"))?,
            att: match cfg.aggregation {
                Aggregation::Attention => Some(AttentionParams::from_store(
                    store,
                    &format!("{prefix}.att"),
                )?),
                Aggregation::FinalState => None,
            },
        })
    }

    fn bind(&self, tape: &mut Tape, store: &ParamStore) -> BoundLevel {
        BoundLevel {
            fwd: self.fwd.bind(tape, store),
            bwd: self.bwd.bind(tape, store),
            att: self.att.as_ref().map(|a| a.bind(tape, store)),
        }
    }
}

impl BoundLevel {
    /// Bi-LSTM over `seq`, summarised into one vector. Returns the per-position
    /// states, the summary and the attention weights when attention is used.
    fn run(&self, tape: &mut Tape, seq: &[Var]) -> Result<(Vec<Var>, Var, Option<Var>)> {
        let BiLstmStates {
            outputs,
            forward,
            backward,
        } = bilstm_states(tape, seq, &self.fwd, &self.bwd)?;
        match &self.att {
            Some(att) => {
                let (pooled, weights) = attention_pool(tape, &outputs, att)?;
                Ok((outputs, pooled, Some(weights)))
            }
            None => {
                let last = *forward.last().expect("non-empty sequence");
                let pooled = tape.concat(&[last, backward[0]])?;
                Ok((outputs, pooled, None))
            }
        }
    }
}

#[derive(Clone)]
pub struct CoherenceModel {
    config: CoherenceModelConfig,
    store: ParamStore,
    words: EmbeddingTable,
    gr_vocab: Option<GrVocabulary>,
    gr_inputs: Option<EmbeddingTable>,
    word: Level,
    sent: Level,
    para: Option<Level>,
    w_d: ParamId,
    w_r: Option<ParamId>,
}

impl std::fmt::Debug for CoherenceModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoherenceModel")
            .field("config", &self.config)
            .field("vocab", &self.words.len())
            .field("parameters", &self.store.num_values())
            .finish()
    }
}

fn check_gr_vocab(cfg: &CoherenceModelConfig, gr_vocab: Option<&GrVocabulary>) -> Result<()> {
    match (cfg.variant.uses_grs(), gr_vocab) {
        (false, Some(_)) => Err(Error::config("gr_vocab", "STL takes no GR vocabulary")),
        (true, None) => Err(Error::config(
            "gr_vocab",
            format!("{} needs a GR vocabulary", cfg.variant),
        )),
        (true, Some(v)) => {
            if v.mode() != cfg.variant.gr_mode() {
                return Err(Error::config(
                    "gr_vocab",
                    format!(
                        "{} needs a {:?} vocabulary",
                        cfg.variant,
                        cfg.variant.gr_mode()
                    ),
                ));
            }
            if cfg.variant.has_gr_head() && v.len() < 2 {
                return Err(Error::config(
                    "gr_vocab",
                    "the GR head needs at least 2 classes",
                ));
            }
            Ok(())
        }
        (false, None) => Ok(()),
    }
}

/// GR vocabulary matching a variant, built from training data in full mode.
pub fn gr_vocab_for(variant: Variant, train: &Corpus) -> Option<GrVocabulary> {
    match variant.gr_mode() {
        _ if !variant.uses_grs() => None,
        GrMode::Sox => Some(GrVocabulary::sox()),
        GrMode::Full => Some(GrVocabulary::build_full(train)),
    }
}

impl CoherenceModel {
    /// Initialises a model. Parameters are registered in a fixed order with
    /// the GR head last, so variants that differ only in that head share
    /// every other initial value for a given seed.
    pub fn new(
        config: CoherenceModelConfig,
        vocab: Vec<String>,
        gr_vocab: Option<GrVocabulary>,
        pretrained: Option<&EmbeddingMatrix>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        check_gr_vocab(&config, gr_vocab.as_ref())?;
        let mut vocab = vocab;
        if !vocab.iter().any(|w| w == UNK) {
            vocab.insert(0, UNK.to_string());
        }
        let e = config.embed_dim;
        let mut store = ParamStore::new();

        let bound = (6.0 / (e + 1) as f64).sqrt();
        let mut values: Vec<f64> = (0..vocab.len() * e)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        if let Some(m) = pretrained {
            if m.dim() != e {
                return Err(Error::config(
                    "embed_dim",
                    format!(
                        "{e} does not match pre-trained vectors of width {}",
                        m.dim()
                    ),
                ));
            }
            let mut hits = 0;
            for (i, w) in vocab.iter().enumerate() {
                if let Some(v) = m.get(w) {
                    values[i * e..(i + 1) * e].copy_from_slice(v);
                    hits += 1;
                }
            }
            log::info!(
                "{hits} of {} vocabulary words have pre-trained vectors",
                vocab.len()
            );
        }
        store.add("embed.words", Tensor::matrix(vocab.len(), e, values)?)?;

        if config.variant == Variant::ConcatGrs {
            let g = config.gr_embed_dim;
            let n = gr_vocab.as_ref().expect("checked").len();
            let bound = (6.0 / (g + 1) as f64).sqrt();
            let values = (0..n * g).map(|_| rng.gen_range(-bound..bound)).collect();
            store.add("embed.gr", Tensor::matrix(n, g, values)?)?;
        }

        Level::register(
            &mut store,
            "word",
            config.word_input_dim(),
            config.word_hidden,
            &config,
            rng,
        )?;
        let word_state = 2 * config.word_hidden;
        Level::register(
            &mut store,
            "sent",
            word_state,
            config.sent_hidden,
            &config,
            rng,
        )?;
        if config.levels == 3 {
            Level::register(
                &mut store,
                "para",
                2 * config.sent_hidden,
                config.para_hidden,
                &config,
                rng,
            )?;
        }
        store.add_glorot("score.w_d", config.num_classes, config.doc_dim(), rng)?;
        if config.variant.has_gr_head() {
            let r = gr_vocab.as_ref().expect("checked").len();
            store.add_glorot("gr_head.w_r", r, word_state, rng)?;
        }
        Self::assemble(config, store, vocab, gr_vocab)
    }

    /// Wires up a model around an already populated parameter store.
    fn assemble(
        config: CoherenceModelConfig,
        store: ParamStore,
        vocab: Vec<String>,
        gr_vocab: Option<GrVocabulary>,
    ) -> Result<Self> {
        let need = |name: &str| {
            store
                .id(name)
                .ok_or_else(|| Error::InvalidInput(format!("missing parameter `{name}`")))
        };
        let words = EmbeddingTable::new(
            vocab,
            need("embed.words")?,
            config.embed_dim,
            config.trainable_embeddings,
        )?;
        let gr_inputs = match config.variant {
            Variant::ConcatGrs => Some(EmbeddingTable::new(
                gr_vocab.as_ref().expect("checked").classes().to_vec(),
                need("embed.gr")?,
                config.gr_embed_dim,
                true,
            )?),
            _ => None,
        };
        let word = Level::from_store(&store, "word", &config)?;
        let sent = Level::from_store(&store, "sent", &config)?;
        let para = match config.levels {
            3 => Some(Level::from_store(&store, "para", &config)?),
            _ => None,
        };
        let w_d = need("score.w_d")?;
        let w_r = match config.variant.has_gr_head() {
            true => Some(need("gr_head.w_r")?),
            false => None,
        };
        let expected_wd = [config.num_classes, config.doc_dim()];
        if store.get(w_d).tensor.shape() != expected_wd {
            return Err(Error::shape(
                "score.w_d",
                store.get(w_d).tensor.shape(),
                &expected_wd,
            ));
        }
        Ok(CoherenceModel {
            config,
            store,
            words,
            gr_vocab,
            gr_inputs,
            word,
            sent,
            para,
            w_d,
            w_r,
        })
    }

    pub fn config(&self) -> &CoherenceModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn vocab(&self) -> &[String] {
        self.words.tokens()
    }

    pub fn gr_vocab(&self) -> Option<&GrVocabulary> {
        self.gr_vocab.as_ref()
    }

    fn word_row(&self, surface: &str) -> usize {
        self.words
            .row(&surface.to_lowercase())
            .or_else(|| self.words.row(UNK))
            .expect("vocabulary contains UNK")
    }

    /// Embedding row for each token, as values.
    pub fn embedding_values(&self, doc: &Document) -> Vec<Vec<f64>> {
        let m = &self.store.get(self.words.matrix).tensor;
        let e = self.config.embed_dim;
        doc.tokens()
            .map(|t| {
                let r = self.word_row(&t.surface);
                m.values()[r * e..(r + 1) * e].to_vec()
            })
            .collect()
    }

    /// Places each token's embedding on the tape, in document order.
    pub fn embed_words(&self, tape: &mut Tape, doc: &Document) -> Result<Vec<Var>> {
        doc.tokens()
            .map(|t| {
                self.words
                    .lookup_row(tape, &self.store, self.word_row(&t.surface))
            })
            .collect()
    }

    /// Appends each token's GR-type embedding to its word input.
    pub fn concat_gr_inputs(
        &self,
        tape: &mut Tape,
        doc: &Document,
        inputs: &[Var],
    ) -> Result<Vec<Var>> {
        let table = self.gr_inputs.as_ref().ok_or_else(|| {
            Error::InvalidInput(format!("{} does not take GR inputs", self.config.variant))
        })?;
        doc.tokens()
            .zip(inputs)
            .map(|(t, &x)| {
                let row =
                    t.gr.as_deref()
                        .and_then(|g| table.row(g))
                        .ok_or_else(|| Error::MissingGr {
                            token: t.surface.clone(),
                        })?;
                let g = table.lookup_row(tape, &self.store, row)?;
                tape.concat(&[x, g])
            })
            .collect()
    }

    /// Runs the encoder from the given word embeddings (one per token).
    pub fn encode_document(
        &self,
        tape: &mut Tape,
        doc: &Document,
        embeddings: &[Var],
        mut drop: Option<&mut Dropout<'_>>,
    ) -> Result<Encoded> {
        doc.validate()?;
        if embeddings.len() != doc.num_tokens() {
            return Err(Error::LengthMismatch {
                left: embeddings.len(),
                right: doc.num_tokens(),
            });
        }
        let mut inputs = Vec::with_capacity(embeddings.len());
        for &x in embeddings {
            inputs.push(maybe_dropout(
                tape,
                x,
                self.config.dropout_words,
                &mut drop,
            )?);
        }
        if self.config.variant == Variant::ConcatGrs {
            inputs = self.concat_gr_inputs(tape, doc, &inputs)?;
        }

        let word = self.word.bind(tape, &self.store);
        let sent = self.sent.bind(tape, &self.store);
        let para = self.para.as_ref().map(|p| p.bind(tape, &self.store));

        let mut attention = AttentionTrace::default();
        let mut word_states = Vec::with_capacity(inputs.len());
        let mut paragraphs: Vec<Vec<Var>> = Vec::with_capacity(doc.paragraphs.len());
        let mut offset = 0;
        for paragraph in &doc.paragraphs {
            let mut sentences = Vec::with_capacity(paragraph.len());
            for sentence in paragraph {
                let seq = &inputs[offset..offset + sentence.len()];
                offset += sentence.len();
                let (states, s, weights) = word.run(tape, seq)?;
                word_states.extend(states);
                attention.word.extend(weights);
                sentences.push(maybe_dropout(
                    tape,
                    s,
                    self.config.dropout_sentences,
                    &mut drop,
                )?);
            }
            paragraphs.push(sentences);
        }

        let doc_vector = match &para {
            None => {
                let all: Vec<Var> = paragraphs.concat();
                let (_, d, weights) = sent.run(tape, &all)?;
                attention.sentence.extend(weights);
                d
            }
            Some(para) => {
                let mut pooled = Vec::with_capacity(paragraphs.len());
                for sentences in &paragraphs {
                    let (_, p, weights) = sent.run(tape, sentences)?;
                    attention.sentence.extend(weights);
                    pooled.push(p);
                }
                let (_, d, weights) = para.run(tape, &pooled)?;
                attention.paragraph = weights;
                d
            }
        };
        Ok(Encoded {
            doc_vector,
            word_states,
            attention,
        })
    }

    /// Full forward pass from precomputed word embeddings.
    pub fn forward_from_embeddings(
        &self,
        tape: &mut Tape,
        doc: &Document,
        embeddings: &[Var],
        drop: Option<&mut Dropout<'_>>,
    ) -> Result<Forward> {
        let encoded = self.encode_document(tape, doc, embeddings, drop)?;
        let w_d = tape.param(&self.store, self.w_d);
        let score = score_coherence(tape, encoded.doc_vector, w_d)?;
        let gr = match self.w_r {
            Some(w_r) => {
                let w_r = tape.param(&self.store, w_r);
                gr_distributions(tape, &encoded.word_states, w_r)?
            }
            None => Vec::new(),
        };
        Ok(Forward { score, gr, encoded })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        doc: &Document,
        drop: Option<&mut Dropout<'_>>,
    ) -> Result<Forward> {
        let embeddings = self.embed_words(tape, doc)?;
        self.forward_from_embeddings(tape, doc, &embeddings, drop)
    }

    /// GR class of each token; `None` when absent or outside the vocabulary.
    pub fn gold_gr(&self, doc: &Document) -> Vec<Option<usize>> {
        doc.tokens()
            .map(|t| {
                let v = self.gr_vocab.as_ref()?;
                v.class_of(t.gr.as_deref()?)
            })
            .collect()
    }

    /// Coherence loss of `score` against the document label.
    pub fn coherence_loss(
        &self,
        tape: &mut Tape,
        label: CoherenceLabel,
        score: Var,
    ) -> Result<Var> {
        match (label, self.config.is_binary()) {
            (CoherenceLabel::Binary(y), true) => loss_binary(tape, y, score),
            (CoherenceLabel::Graded(c), false) if (c as usize) < self.config.num_classes => {
                let mut y = vec![0.0; self.config.num_classes];
                y[c as usize] = 1.0;
                loss_multiclass(tape, &y, score)
            }
            (label, _) => Err(Error::InvalidInput(format!(
                "label {label:?} does not fit a model with {} class(es)",
                self.config.num_classes
            ))),
        }
    }

    /// Forward pass plus `α·L1 + β·L2` for one document.
    pub fn document_loss(
        &self,
        tape: &mut Tape,
        doc: &Document,
        drop: Option<&mut Dropout<'_>>,
    ) -> Result<DocumentLoss> {
        let forward = self.forward(tape, doc, drop)?;
        let coherence = self.coherence_loss(tape, doc.label, forward.score)?;
        let gr = match self.config.variant.has_gr_head() {
            true => Some(loss_gr(tape, &self.gold_gr(doc), &forward.gr)?),
            false => None,
        };
        let total = loss_total(tape, coherence, gr, self.config.alpha, self.config.beta)?;
        Ok(DocumentLoss {
            total,
            coherence,
            gr,
            forward,
        })
    }

    /// Eval-mode prediction (no dropout).
    pub fn predict(&self, doc: &Document) -> Result<CoherencePrediction> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, doc, None)?;
        Ok(CoherencePrediction {
            score: tape.values(f.score).to_vec(),
            gr: match self.w_r {
                Some(_) => Some(f.gr.iter().map(|&g| tape.values(g).to_vec()).collect()),
                None => None,
            },
            doc_vector: tape.values(f.encoded.doc_vector).to_vec(),
            attention: f
                .encoded
                .attention
                .all()
                .map(|a| tape.values(a).to_vec())
                .collect(),
        })
    }

    pub fn score(&self, doc: &Document) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, doc, None)?;
        Ok(tape.values(f.score).to_vec())
    }

    /// Per-token GR distributions.
    pub fn predict_gr(&self, doc: &Document) -> Result<Vec<Vec<f64>>> {
        if self.w_r.is_none() {
            return Err(Error::InvalidInput(format!(
                "{} has no GR prediction head",
                self.config.variant
            )));
        }
        Ok(self.predict(doc)?.gr.expect("head present"))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            vocab: self.words.tokens().to_vec(),
            gr_vocab: self.gr_vocab.clone(),
            parameters: self
                .store
                .iter()
                .map(|p| NamedTensor {
                    name: p.name.clone(),
                    shape: p.tensor.shape().to_vec(),
                    values: p.tensor.values().to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported checkpoint version {}",
                ck.format_version
            )));
        }
        ck.config.validate()?;
        let gr_vocab = ck.gr_vocab;
        check_gr_vocab(&ck.config, gr_vocab.as_ref())?;
        let mut store = ParamStore::new();
        for t in ck.parameters {
            store.add(t.name, Tensor::new(t.shape, t.values)?)?;
        }
        let vocab_rows = store
            .by_name("embed.words")
            .map(|p| p.tensor.shape()[0])
            .unwrap_or(0);
        if vocab_rows != ck.vocab.len() {
            return Err(Error::LengthMismatch {
                left: vocab_rows,
                right: ck.vocab.len(),
            });
        }
        Self::assemble(ck.config, store, ck.vocab, gr_vocab)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }
}
