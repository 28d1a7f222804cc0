#![allow(dead_code)]

use std::path::PathBuf;

use coherence::autograd::Tape;
use coherence::data::{permute_corpus, synth_corpus, Corpus, Document, SynthSpec};
use coherence::model::{CoherenceModel, CoherenceModelConfig, Variant};
use coherence::training::{init_model, TrainConfig};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

/// The bundled 20-original synthetic corpus with up to 5 permutations each.
pub fn synth_fixture() -> Corpus {
    Corpus::load(fixture("synth_binary.jsonl")).expect("fixture loads")
}

pub fn small_corpus(num_docs: usize, sents: usize, paragraph: Option<usize>, seed: u64) -> Corpus {
    let spec = SynthSpec {
        num_docs,
        vocab_size: 10,
        sents_per_doc: sents,
        words_per_sent: 3,
        seed,
        sents_per_paragraph: paragraph,
        ..SynthSpec::default()
    };
    permute_corpus(&synth_corpus(&spec).unwrap(), 2, seed)
        .unwrap()
        .0
}

pub fn overfit_model_cfg(variant: Variant) -> CoherenceModelConfig {
    CoherenceModelConfig {
        variant,
        embed_dim: 8,
        word_hidden: 8,
        sent_hidden: 8,
        gr_embed_dim: 2,
        alpha: 1.0,
        beta: if variant.has_gr_head() { 0.1 } else { 0.0 },
        ..CoherenceModelConfig::default()
    }
}

pub fn overfit_train_cfg() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.003,
        batch_size: 8,
        dropout_rate: 0.0,
        epochs: 200,
        ..TrainConfig::default()
    }
}

/// Epochs whose loss exceeds the lowest loss seen before them by more
/// than `tolerance` (relative).
pub fn upward_blips(losses: &[f64], tolerance: f64) -> usize {
    let mut best = f64::INFINITY;
    let mut blips = 0;
    for &l in losses {
        if l > best * (1.0 + tolerance) {
            blips += 1;
        }
        best = best.min(l);
    }
    blips
}

/// Variants at dims ≤ 8, including a three-level graded configuration.
pub fn gradcheck_configs() -> Vec<(String, CoherenceModelConfig, Corpus)> {
    let mut out = Vec::new();
    let binary = small_corpus(2, 3, None, 1);
    for v in Variant::ALL {
        out.push((v.to_string(), CoherenceModelConfig::tiny(v), binary.clone()));
    }
    let mut graded = small_corpus(2, 4, Some(2), 2);
    for (i, d) in graded.documents.iter_mut().enumerate() {
        d.label = coherence::data::CoherenceLabel::Graded((i % 3) as u8);
    }
    out.push((
        "MTL 3-level graded".into(),
        CoherenceModelConfig {
            levels: 3,
            num_classes: 3,
            ..CoherenceModelConfig::tiny(Variant::Mtl)
        },
        graded,
    ));
    out
}

pub fn tiny_model(cfg: &CoherenceModelConfig, corpus: &Corpus, seed: u64) -> CoherenceModel {
    init_model(cfg, corpus, None, seed).unwrap()
}

fn loss_value(model: &CoherenceModel, doc: &Document) -> f64 {
    let mut tape = Tape::new();
    let l = model.document_loss(&mut tape, doc, None).unwrap();
    tape.scalar(l.total)
}

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub max_rel: f64,
    pub worst: String,
    pub checked: usize,
}

/// Compares backprop gradients of the total loss with central differences
/// for every parameter element. Relative error is
/// `|a - n| / max(|a|, |n|, floor)`.
pub fn grad_check(model: &mut CoherenceModel, doc: &Document, h: f64, floor: f64) -> GradCheck {
    let mut tape = Tape::new();
    let l = model.document_loss(&mut tape, doc, None).unwrap();
    tape.backward(l.total).unwrap();
    model.store_mut().zero_grads();
    model.store_mut().accumulate_from(&tape, 1.0);
    let analytic: Vec<Vec<f64>> = model
        .store()
        .iter()
        .map(|p| {
            p.tensor
                .grad
                .clone()
                .unwrap_or_else(|| vec![0.0; p.tensor.len()])
        })
        .collect();

    let ids: Vec<_> = model.store().ids().collect();
    let mut report = GradCheck {
        max_rel: 0.0,
        worst: String::new(),
        checked: 0,
    };
    for (k, id) in ids.into_iter().enumerate() {
        for (j, &a) in analytic[k].iter().enumerate() {
            let orig = model.store().get(id).tensor.values()[j];
            model.store_mut().get_mut(id).tensor.values_mut()[j] = orig + h;
            let up = loss_value(model, doc);
            model.store_mut().get_mut(id).tensor.values_mut()[j] = orig - h;
            let down = loss_value(model, doc);
            model.store_mut().get_mut(id).tensor.values_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            report.checked += 1;
            if rel > report.max_rel {
                report.max_rel = rel;
                report.worst = format!(
                    "{}[{j}]: analytic {a:e} numeric {numeric:e}",
                    model.store().get(id).name
                );
            }
        }
    }
    report
}
