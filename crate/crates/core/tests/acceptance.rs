//! Acceptance suite. Runs every criterion in order, prints one line per
//! criterion and exits non-zero if a gating criterion fails.

mod common;

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use coherence::autograd::Tape;
use coherence::cli::{checkpoint_path, cmd_train, history_path, RunConfig};
use coherence::data::{
    generate_permutations, min_adjacent_transpositions, permute_corpus, synth_corpus,
    CoherenceLabel, Corpus, Document, Origin, SynthSpec, Token,
};
use coherence::evaluation::{
    argmax, pra, saliency, saliency_html, scored_groups, tpra, ScoredGroup,
};
use coherence::model::{
    combine_losses, loss_binary, loss_multiclass, Aggregation, CoherenceModelConfig, Variant,
};
use coherence::training::{gr_accuracy, init_model, train, TrainConfig, Trainer};
use common::{
    grad_check, gradcheck_configs, overfit_model_cfg, overfit_train_cfg, synth_fixture, tiny_model,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, budget_secs: u64) -> bool {
    elapsed <= Duration::from_secs(budget_secs)
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    for (name, cfg, corpus) in gradcheck_configs() {
        for doc in corpus.iter().take(2) {
            let mut model = tiny_model(&cfg, &corpus, 11);
            let r = grad_check(&mut model, doc, 1e-4, 1e-6);
            checked += r.checked;
            if r.max_rel > worst.0 {
                worst = (r.max_rel, format!("{name}: {}", r.worst));
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst.0 < 1e-4 && within(elapsed, 60),
        format!(
            "{checked} parameter elements, max relative error {:.2e} ({}), {:.1}s",
            worst.0,
            worst.1,
            elapsed.as_secs_f64()
        ),
    )
}

fn beta_zero_equivalence() -> Outcome {
    let start = Instant::now();
    let corpus = synth_fixture();
    // dropout on, so the dropout stream is exercised as well
    let cfg = TrainConfig {
        epochs: 3,
        ..overfit_train_cfg()
    };
    let stl = overfit_model_cfg(Variant::Stl);
    let mtl = CoherenceModelConfig {
        beta: 0.0,
        ..overfit_model_cfg(Variant::Mtl)
    };
    let a = train(
        &corpus,
        &corpus,
        &stl,
        &TrainConfig {
            dropout_rate: 0.5,
            ..cfg.clone()
        },
        None,
    )
    .unwrap();
    let b = train(
        &corpus,
        &corpus,
        &mtl,
        &TrainConfig {
            dropout_rate: 0.5,
            ..cfg
        },
        None,
    )
    .unwrap();
    let same_losses = a
        .history
        .records
        .iter()
        .zip(&b.history.records)
        .all(|(x, y)| {
            x.train_loss.to_bits() == y.train_loss.to_bits() && x.dev_metric == y.dev_metric
        });
    let same_params = a.model.store().iter().all(|p| {
        b.model.store().by_name(&p.name).map(|q| q.tensor.values()) == Some(p.tensor.values())
    });
    let elapsed = start.elapsed();
    outcome(
        same_losses && same_params && within(elapsed, 60),
        format!(
            "3 epochs, losses {:?}, shared parameters identical: {same_params}, {:.1}s",
            a.history
                .records
                .iter()
                .map(|r| r.train_loss)
                .collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    )
}

fn overfit_oracle() -> Outcome {
    let start = Instant::now();
    let corpus = synth_fixture();
    let model = init_model(&overfit_model_cfg(Variant::Stl), &corpus, None, 0).unwrap();
    let mut trainer = Trainer::new(model, &corpus, &corpus, overfit_train_cfg()).unwrap();
    let mut stl_epoch = None;
    for _ in 0..200 {
        let r = trainer.run_epoch().unwrap();
        if r.dev_metric == 1.0 {
            stl_epoch = Some(r.epoch);
            break;
        }
    }

    let model = init_model(&overfit_model_cfg(Variant::Mtl), &corpus, None, 0).unwrap();
    let mut trainer = Trainer::new(model, &corpus, &corpus, overfit_train_cfg()).unwrap();
    let mut gr = (0.0, 0);
    for _ in 0..200 {
        let epoch = trainer.run_epoch().unwrap().epoch;
        gr = (gr_accuracy(trainer.model(), &corpus).unwrap(), epoch);
        if gr.0 >= 0.95 {
            break;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        stl_epoch.is_some() && gr.0 >= 0.95 && within(elapsed, 300),
        format!(
            "STL train PRA 1.0 at epoch {stl_epoch:?}; MTL GR accuracy {:.3} at epoch {}; {:.1}s",
            gr.0,
            gr.1,
            elapsed.as_secs_f64()
        ),
    )
}

fn brute_pra(groups: &[ScoredGroup]) -> f64 {
    let (mut hit, mut n) = (0, 0);
    for (o, perms) in groups {
        for p in perms {
            n += 1;
            if o > p {
                hit += 1;
            }
        }
    }
    hit as f64 / n as f64
}

fn brute_tpra(groups: &[ScoredGroup]) -> f64 {
    let all: Vec<f64> = groups.iter().flat_map(|g| g.1.iter().copied()).collect();
    let (mut hit, mut n) = (0, 0);
    for (o, _) in groups {
        for p in &all {
            n += 1;
            if o > p {
                hit += 1;
            }
        }
    }
    hit as f64 / n as f64
}

fn bfs_distances(n: usize) -> HashMap<Vec<usize>, u64> {
    let start: Vec<usize> = (0..n).collect();
    let mut dist = HashMap::from([(start.clone(), 0u64)]);
    let mut queue = VecDeque::from([start]);
    while let Some(p) = queue.pop_front() {
        let d = dist[&p];
        for i in 0..n.saturating_sub(1) {
            let mut q = p.clone();
            q.swap(i, i + 1);
            if !dist.contains_key(&q) {
                dist.insert(q.clone(), d + 1);
                queue.push_back(q);
            }
        }
    }
    dist
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for _ in 0..200 {
        // coarse grid so ties are common
        let groups: Vec<ScoredGroup> = (0..rng.gen_range(1..8))
            .map(|_| {
                let perms = (0..rng.gen_range(1..6))
                    .map(|_| rng.gen_range(0..6) as f64 / 5.0)
                    .collect();
                (rng.gen_range(0..6) as f64 / 5.0, perms)
            })
            .collect();
        if pra(&groups).unwrap() != brute_pra(&groups)
            || tpra(&groups).unwrap() != brute_tpra(&groups)
        {
            mismatches += 1;
        }
    }
    let mut perms_checked = 0;
    for n in 1..=6 {
        let identity: Vec<usize> = (0..n).collect();
        for (p, d) in bfs_distances(n) {
            perms_checked += 1;
            if min_adjacent_transpositions(&p, &identity).unwrap() != d {
                mismatches += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && within(elapsed, 60),
        format!(
            "200 score configurations, {perms_checked} permutations (n <= 6), {mismatches} mismatches, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn random_document(rng: &mut ChaCha8Rng, id: usize, paragraphs: bool) -> Document {
    const GRS: [&str; 5] = ["nsubj", "dobj", "amod", "root", "punct"];
    let num_paragraphs = if paragraphs { rng.gen_range(2..4) } else { 1 };
    let paragraphs = (0..num_paragraphs)
        .map(|_| {
            (0..rng.gen_range(1..4))
                .map(|_| {
                    (0..rng.gen_range(1..6))
                        .map(|_| {
                            Token::new(
                                format!("t{}", rng.gen_range(0..12)),
                                Some(GRS[rng.gen_range(0..5)]),
                            )
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Document {
        id: format!("r{id}"),
        label: CoherenceLabel::COHERENT,
        paragraphs,
        origin: Origin::Original,
    }
}

fn normalisation() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst, mut vectors) = (0.0f64, 0usize);
    for i in 0..1000 {
        let three = rng.gen_bool(0.5);
        let doc = random_document(&mut rng, i, three);
        // companion document so every GR class is in the vocabulary
        let all_roles = Document::from_sentences(
            "roles",
            vec![["nsubj", "dobj", "amod", "root", "punct"]
                .iter()
                .map(|g| Token::new("t0", Some(g)))
                .collect()],
        );
        let corpus = Corpus::new(vec![doc, all_roles]);
        let cfg = CoherenceModelConfig {
            levels: if three { 3 } else { 2 },
            aggregation: Aggregation::Attention,
            ..CoherenceModelConfig::tiny(Variant::ALL[i % 4])
        };
        let model = init_model(&cfg, &corpus, None, i as u64).unwrap();
        let p = model.predict(&corpus.documents[0]).unwrap();
        for v in p.attention.iter().chain(p.gr.iter().flatten()) {
            vectors += 1;
            worst = worst.max((v.iter().sum::<f64>() - 1.0).abs());
        }
    }
    outcome(
        worst <= 1e-9,
        format!(
            "1000 forward passes, {vectors} distributions, max |sum - 1| = {worst:.1e}, {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn permutation_sets() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut bad = 0;
    let mut n3_counts = HashSet::new();
    for i in 0..1000u64 {
        let n = rng.gen_range(2..9usize);
        let doc = Document::from_sentences(
            "d",
            (0..n)
                .map(|s| vec![Token::new(format!("s{s}"), None)])
                .collect(),
        );
        let perms = generate_permutations(&doc, 20, i).unwrap();
        let orders: Vec<Vec<usize>> = perms
            .iter()
            .map(|p| match &p.origin {
                Origin::Permutation { order, .. } => order.clone(),
                Origin::Original => panic!("unexpected original"),
            })
            .collect();
        let identity: Vec<usize> = (0..n).collect();
        let distinct: HashSet<&Vec<usize>> = orders.iter().collect();
        let expected = (1..=n).product::<usize>().saturating_sub(1).min(20);
        if orders.contains(&identity) || distinct.len() != orders.len() || orders.len() != expected
        {
            bad += 1;
        }
        if n == 3 {
            n3_counts.insert(orders.len());
        }
    }
    outcome(
        bad == 0 && n3_counts == HashSet::from([5]),
        format!(
            "1000 sets, {bad} violations, n=3 set sizes {n3_counts:?}, {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn loss_anchors() -> Outcome {
    let mut tape = Tape::new();
    let half = tape.vector(vec![0.5]).unwrap();
    let l_bin = loss_binary(&mut tape, 1, half).unwrap();
    let zeros = tape.vector(vec![0.0, 0.0, 0.0]).unwrap();
    let l_mc = loss_multiclass(&mut tape, &[1.0, 0.0, 0.0], zeros).unwrap();
    let (bin, mc) = (tape.scalar(l_bin), tape.scalar(l_mc));
    let total = combine_losses(1.0, Some(2.0), 0.7, 0.3).unwrap();
    // 0.7 and 0.3 are not representable; the IEEE evaluation of
    // 0.7*1 + 0.3*2 lands one ulp below the double nearest 1.3
    let ieee = 0.7f64 * 1.0 + 0.3 * 2.0;
    let ulps = (total.to_bits() as i64 - 1.3f64.to_bits() as i64).abs();
    let pass = (bin - std::f64::consts::LN_2).abs() <= 1e-12
        && (mc - 1.0 / 3.0).abs() <= 1e-12
        && total.to_bits() == ieee.to_bits()
        && ulps <= 1;
    outcome(
        pass,
        format!(
            "binary {bin:.15}, multiclass {mc:.15}, total {total:?} (bit-equal to IEEE 0.7*1+0.3*2; {ulps} ulp from the literal 1.3)"
        ),
    )
}

fn determinism() -> Outcome {
    let start = Instant::now();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut cfg = RunConfig::from_json(
        r#"{"preset": "wsj-like",
            "model": {"embed_dim": 8, "word_hidden": 6, "sent_hidden": 6},
            "train": {"epochs": 2, "ensemble_runs": 2, "batch_size": 16, "seed": 9},
            "train_path": "synth_binary.jsonl", "output_dir": "unused"}"#,
    )
    .unwrap();
    cfg.resolve_paths(&common::fixture(""));
    let mut files = Vec::new();
    for dir in &dirs {
        cfg.output_dir = dir.path().to_path_buf();
        cmd_train(&cfg, &mut std::io::sink()).unwrap();
        let mut bytes = Vec::new();
        for run in 0..2 {
            bytes.push(fs::read(checkpoint_path(dir.path(), run)).unwrap());
            bytes.push(fs::read(history_path(dir.path(), run)).unwrap());
        }
        files.push(bytes);
    }
    outcome(
        files[0] == files[1],
        format!(
            "2 runs x 2 ensemble members, checkpoints and history CSVs byte-identical: {}, {:.1}s",
            files[0] == files[1],
            start.elapsed().as_secs_f64()
        ),
    )
}

/// Finite-difference sensitivity of the selected score class to each
/// token's embedding.
fn fd_norms(
    model: &coherence::model::CoherenceModel,
    doc: &Document,
    class: usize,
    h: f64,
) -> Vec<f64> {
    let base = model.embedding_values(doc);
    let score = |emb: &[Vec<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<_> = emb
            .iter()
            .map(|v| tape.vector(v.clone()).unwrap())
            .collect();
        let f = model
            .forward_from_embeddings(&mut tape, doc, &vars, None)
            .unwrap();
        tape.values(f.score)[class]
    };
    (0..base.len())
        .map(|t| {
            let mut sq = 0.0;
            for j in 0..base[t].len() {
                let mut e = base.clone();
                e[t][j] += h;
                let up = score(&e);
                e[t][j] -= 2.0 * h;
                let down = score(&e);
                sq += ((up - down) / (2.0 * h)).powi(2);
            }
            sq.sqrt()
        })
        .collect()
}

fn saliency_sanity() -> Outcome {
    let start = Instant::now();
    let binary = common::small_corpus(2, 3, None, 3);
    let mut graded = common::small_corpus(2, 4, Some(2), 4);
    graded
        .documents
        .iter_mut()
        .for_each(|d| d.label = CoherenceLabel::Graded(1));
    let cases = [
        (CoherenceModelConfig::tiny(Variant::Stl), binary.clone()),
        (CoherenceModelConfig::tiny(Variant::ConcatGrs), binary),
        (
            CoherenceModelConfig {
                levels: 3,
                num_classes: 3,
                ..CoherenceModelConfig::tiny(Variant::Mtl)
            },
            graded,
        ),
    ];
    let (mut worst, mut spans_ok, mut tokens) = (0.0f64, true, 0);
    for (cfg, corpus) in cases {
        let model = init_model(&cfg, &corpus, None, 8).unwrap();
        for doc in corpus.iter().take(3) {
            let records = saliency(&model, doc).unwrap();
            let class = argmax(&model.score(doc).unwrap());
            for (r, n) in records.iter().zip(fd_norms(&model, doc, class, 1e-5)) {
                worst = worst.max((r.norm - n).abs() / r.norm.max(n).max(1e-12));
            }
            let html = saliency_html(doc, &records).unwrap();
            spans_ok &= html.matches("<span class=\"tok\"").count() == doc.num_tokens();
            tokens += doc.num_tokens();
        }
    }
    outcome(
        worst < 1e-3 && spans_ok,
        format!(
            "{tokens} tokens, max relative error {worst:.1e}, one span per token: {spans_ok}, {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn directional_smoke() -> String {
    let start = Instant::now();
    let spec = SynthSpec {
        num_docs: 200,
        sents_per_doc: 4,
        words_per_sent: 5,
        seed: 10,
        ..SynthSpec::default()
    };
    let (all, _) = permute_corpus(&synth_corpus(&spec).unwrap(), 3, 10).unwrap();
    let part = |lo: usize, hi: usize| {
        Corpus::new(
            all.iter()
                .filter(|d| {
                    let n: usize = d.root_id().trim_start_matches("synth-").parse().unwrap();
                    (lo..hi).contains(&n)
                })
                .cloned()
                .collect(),
        )
    };
    let (train_c, dev_c, test_c) = (part(0, 160), part(160, 180), part(180, 200));
    let mut means = Vec::new();
    for variant in [Variant::Mtl, Variant::Stl] {
        let mut total = 0.0;
        for seed in 0..5 {
            let cfg = TrainConfig {
                epochs: 12,
                seed,
                ..overfit_train_cfg()
            };
            let out = train(&train_c, &dev_c, &overfit_model_cfg(variant), &cfg, None).unwrap();
            let model = coherence::model::CoherenceModel::from_checkpoint(out.best).unwrap();
            let scores: Vec<Vec<f64>> = test_c.iter().map(|d| model.score(d).unwrap()).collect();
            total += pra(&scored_groups(&test_c, &scores).unwrap()).unwrap();
        }
        means.push(total / 5.0);
    }
    format!(
        "mean test PRA over 5 seeds: MTL {:.3}, STL {:.3}; MTL >= STL: {}; {:.1}s",
        means[0],
        means[1],
        means[0] >= means[1],
        start.elapsed().as_secs_f64()
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("gradient correctness", gradient_correctness),
        ("beta = 0 equivalence", beta_zero_equivalence),
        ("overfit oracle", overfit_oracle),
        ("metric oracles", metric_oracles),
        ("attention/softmax normalisation", normalisation),
        ("permutation-set contract", permutation_sets),
        ("loss anchors", loss_anchors),
        ("training determinism", determinism),
        ("saliency sanity", saliency_sanity),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let r = check();
        failed += !r.pass as usize;
        println!(
            "acceptance {:>2} {:<32} {}  {}",
            i + 1,
            name,
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
    }
    println!(
        "acceptance 10 {:<32} REPORT  {}",
        "directional smoke (non-gating)",
        directional_smoke()
    );
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        return ExitCode::FAILURE;
    }
    println!("all gating acceptance criteria passed");
    ExitCode::SUCCESS
}
