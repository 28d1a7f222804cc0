//! Minibatch RMSProp training with development-set model selection.

mod rmsprop;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use rmsprop::{rmsprop_step, rmsprop_update, Rmsprop, RmspropState};

use crate::autograd::Tape;
use crate::data::{Corpus, Document, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::evaluation::{accuracy_counts, argmax, pra_counts, scored_groups, subject_object_f1};
use crate::model::{
    build_word_vocab, gr_vocab_for, Checkpoint, CoherenceModel, CoherenceModelConfig, Dropout,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionMetric {
    #[serde(rename = "PRA", alias = "pra")]
    Pra,
    #[serde(rename = "accuracy")]
    Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout_rate: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    pub seed: u64,
    pub selection_metric: SelectionMetric,
    pub ensemble_runs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 32,
            epochs: 30,
            dropout_rate: 0.5,
            rmsprop_decay: 0.9,
            rmsprop_epsilon: 1e-8,
            seed: 0,
            selection_metric: SelectionMetric::Pra,
            ensemble_runs: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        for (field, v) in [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("ensemble_runs", self.ensemble_runs),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("dropout_rate", "must be in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.rmsprop_decay) {
            return Err(Error::config("rmsprop_decay", "must be in [0, 1)"));
        }
        if self.rmsprop_epsilon.is_nan() || self.rmsprop_epsilon <= 0.0 {
            return Err(Error::config("rmsprop_epsilon", "must be positive"));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> Rmsprop {
        Rmsprop {
            learning_rate: self.learning_rate,
            decay: self.rmsprop_decay,
            epsilon: self.rmsprop_epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_metric: f64,
    pub subject_f1: Option<f64>,
    pub object_f1: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub const HEADER: &'static str = "epoch,train_loss,dev_metric,subject_f1,object_f1";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = format!("{}\n", Self::HEADER);
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch,
                r.train_loss,
                r.dev_metric,
                opt(r.subject_f1),
                opt(r.object_f1)
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Every token must carry a GR label when the variant consumes them.
pub fn check_gr_labels(cfg: &CoherenceModelConfig, corpus: &Corpus) -> Result<()> {
    if !cfg.variant.uses_grs() {
        return Ok(());
    }
    match corpus
        .iter()
        .flat_map(|d| d.tokens())
        .find(|t| t.gr.is_none())
    {
        Some(t) => Err(Error::MissingGr {
            token: t.surface.clone(),
        }),
        None => Ok(()),
    }
}

/// Dev-set measurements taken after each epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DevScores {
    pub metric: f64,
    pub subject_f1: Option<f64>,
    pub object_f1: Option<f64>,
}

/// Scores `corpus` in eval mode and computes the selection metric, plus
/// subject/object F1 for models with a GR head.
pub fn evaluate_dev(
    model: &CoherenceModel,
    corpus: &Corpus,
    metric: SelectionMetric,
) -> Result<DevScores> {
    let mut scores = Vec::with_capacity(corpus.len());
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for doc in corpus.iter() {
        let p = model.predict(doc)?;
        if let (Some(dists), Some(vocab)) = (&p.gr, model.gr_vocab()) {
            for (t, d) in doc.tokens().zip(dists) {
                gold.push(t.gr.as_deref());
                pred.push(vocab.name(argmax(d)));
            }
        }
        scores.push(p.score);
    }
    let value = match metric {
        SelectionMetric::Pra => pra_counts(&scored_groups(corpus, &scores)?)?.ratio(),
        SelectionMetric::Accuracy => {
            let g: Vec<usize> = corpus.iter().map(|d| d.label.class_index()).collect();
            let p: Vec<usize> = scores.iter().map(|s| argmax(s)).collect();
            accuracy_counts(&g, &p)?.ratio()
        }
    };
    let (subject_f1, object_f1) = match model.gr_vocab() {
        Some(_) if model.config().variant.has_gr_head() => {
            let (s, o) = subject_object_f1(&gold, &pred)?;
            (Some(s.f1), Some(o.f1))
        }
        _ => (None, None),
    };
    Ok(DevScores {
        metric: value,
        subject_f1,
        object_f1,
    })
}

/// Fraction of tokens with a known gold GR whose most likely class is the
/// gold one.
pub fn gr_accuracy(model: &CoherenceModel, corpus: &Corpus) -> Result<f64> {
    let (mut correct, mut total) = (0usize, 0usize);
    for doc in corpus.iter() {
        let dists = model.predict_gr(doc)?;
        for (g, d) in model.gold_gr(doc).into_iter().zip(&dists) {
            if let Some(g) = g {
                total += 1;
                correct += (argmax(d) == g) as usize;
            }
        }
    }
    if total == 0 {
        return Err(Error::Empty("gr_accuracy"));
    }
    Ok(correct as f64 / total as f64)
}

/// Builds a freshly initialised model for `train`.
pub fn init_model(
    model_cfg: &CoherenceModelConfig,
    train: &Corpus,
    pretrained: Option<&EmbeddingMatrix>,
    seed: u64,
) -> Result<CoherenceModel> {
    model_cfg.validate_for(train)?;
    check_gr_labels(model_cfg, train)?;
    CoherenceModel::new(
        model_cfg.clone(),
        build_word_vocab(train),
        gr_vocab_for(model_cfg.variant, train),
        pretrained,
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
}

/// Epoch-at-a-time training loop.
pub struct Trainer<'a> {
    model: CoherenceModel,
    train: &'a Corpus,
    dev: &'a Corpus,
    cfg: TrainConfig,
    rng: ChaCha8Rng,
    state: RmspropState,
    history: History,
    best: Option<(f64, usize, Checkpoint)>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        model: CoherenceModel,
        train: &'a Corpus,
        dev: &'a Corpus,
        cfg: TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(Error::Empty("training corpus"));
        }
        if dev.is_empty() {
            return Err(Error::Empty("development corpus"));
        }
        for d in train.iter().chain(dev.iter()) {
            d.validate()?;
        }
        check_gr_labels(model.config(), train)?;
        if cfg.selection_metric == SelectionMetric::Pra
            && !dev.ranking_groups().iter().any(|(_, p)| !p.is_empty())
        {
            return Err(Error::config(
                "selection_metric",
                "PRA needs originals with permutations in the development corpus",
            ));
        }
        // separate stream from the one used for initialisation
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let state = RmspropState::new(model.store());
        Ok(Trainer {
            model,
            train,
            dev,
            cfg,
            rng,
            state,
            history: History::default(),
            best: None,
        })
    }

    pub fn model(&self) -> &CoherenceModel {
        &self.model
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    /// Accumulates the batch-mean gradient of `docs` into the parameter
    /// store and returns the summed loss.
    fn batch_gradient(&mut self, docs: &[&Document]) -> Result<f64> {
        self.model.store_mut().zero_grads();
        let scale = 1.0 / docs.len() as f64;
        let mut total = 0.0;
        for doc in docs {
            let mut tape = Tape::new();
            let mut drop = Dropout {
                rate: self.cfg.dropout_rate,
                rng: &mut self.rng,
            };
            let loss = self.model.document_loss(&mut tape, doc, Some(&mut drop))?;
            let value = tape.scalar(loss.total);
            if !value.is_finite() {
                return Err(Error::NumericFailure(format!(
                    "loss {value} on document `{}`",
                    doc.id
                )));
            }
            total += value;
            tape.backward(loss.total)?;
            self.model.store_mut().accumulate_from(&tape, scale);
        }
        Ok(total)
    }

    /// Runs one epoch: shuffle, batch updates, dev evaluation.
    pub fn run_epoch(&mut self) -> Result<&EpochRecord> {
        let epoch = self.history.records.len() + 1;
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut self.rng);
        let train = self.train;
        let opt = self.cfg.optimizer();
        let mut loss_sum = 0.0;
        for batch in order.chunks(self.cfg.batch_size) {
            let docs: Vec<&Document> = batch.iter().map(|&i| &train.documents[i]).collect();
            loss_sum += self.batch_gradient(&docs)?;
            rmsprop_step(self.model.store_mut(), &mut self.state, &opt)?;
        }
        if self.model.store().iter().any(|p| !p.tensor.all_finite()) {
            return Err(Error::NumericFailure(format!(
                "parameters after epoch {epoch}"
            )));
        }
        let dev = evaluate_dev(&self.model, self.dev, self.cfg.selection_metric)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            dev_metric: dev.metric,
            subject_f1: dev.subject_f1,
            object_f1: dev.object_f1,
        };
        log::info!(
            "epoch {epoch}: train loss {:.6}, dev {:?} {:.4}",
            record.train_loss,
            self.cfg.selection_metric,
            record.dev_metric
        );
        if self.best.as_ref().is_none_or(|(m, _, _)| dev.metric > *m) {
            self.best = Some((dev.metric, epoch, self.model.to_checkpoint()));
        }
        self.history.records.push(record);
        Ok(self.history.records.last().expect("just pushed"))
    }

    pub fn finish(self) -> Result<TrainOutcome> {
        let (best_metric, best_epoch, best) = self
            .best
            .ok_or_else(|| Error::InvalidInput("no epoch was run".into()))?;
        Ok(TrainOutcome {
            best,
            best_epoch,
            best_metric,
            history: self.history,
            model: self.model,
        })
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Checkpoint of the epoch with the highest dev metric (earliest on ties).
    pub best: Checkpoint,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub history: History,
    /// The model after the final epoch.
    pub model: CoherenceModel,
}

/// Trains for `train_cfg.epochs` epochs and keeps the best dev checkpoint.
pub fn train(
    train: &Corpus,
    dev: &Corpus,
    model_cfg: &CoherenceModelConfig,
    train_cfg: &TrainConfig,
    pretrained: Option<&EmbeddingMatrix>,
) -> Result<TrainOutcome> {
    train_cfg.validate()?;
    let model = init_model(model_cfg, train, pretrained, train_cfg.seed)?;
    let mut trainer = Trainer::new(model, train, dev, train_cfg.clone())?;
    for _ in 0..train_cfg.epochs {
        trainer.run_epoch()?;
    }
    trainer.finish()
}

/// Mean of the member models' score vectors.
pub fn ensemble_predict(models: &[CoherenceModel], doc: &Document) -> Result<Vec<f64>> {
    let first = models.first().ok_or(Error::Empty("ensemble"))?;
    if let Some(m) = models.iter().find(|m| m.config() != first.config()) {
        return Err(Error::InvalidInput(format!(
            "ensemble members disagree on configuration: {:?} vs {:?}",
            first.config(),
            m.config()
        )));
    }
    let mut sum = vec![0.0; first.config().num_classes];
    for m in models {
        for (s, v) in sum.iter_mut().zip(m.score(doc)?) {
            *s += v;
        }
    }
    let n = models.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

/// Seeded 9:1 split that keeps each original together with its
/// permutations.
pub fn split_train_dev(corpus: &Corpus, seed: u64) -> Result<(Corpus, Corpus)> {
    let mut seen = std::collections::HashSet::new();
    let mut roots: Vec<&str> = corpus
        .iter()
        .map(Document::root_id)
        .filter(|r| seen.insert(*r))
        .collect();
    if roots.len() < 2 {
        return Err(Error::InvalidInput(
            "need at least 2 original documents to split off a development set".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    roots.shuffle(&mut rng);
    let n_dev = (roots.len() / 10).max(1);
    let dev_roots: std::collections::HashSet<&str> = roots[..n_dev].iter().copied().collect();
    let (dev, train): (Vec<Document>, Vec<Document>) = corpus
        .documents
        .iter()
        .cloned()
        .partition(|d| dev_roots.contains(d.root_id()));
    Ok((Corpus::new(train), Corpus::new(dev)))
}
