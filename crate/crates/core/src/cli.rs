//! Command implementations behind the `coherence` binary. Each command
//! writes its human-readable summary to `out` and returns its result.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{
    load_embeddings, permute_corpus, synth_corpus, Corpus, PermuteSummary, SynthSpec,
};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, saliency, saliency_html, EvalReport, Metric, TokenSaliency};
use crate::model::{CoherenceModel, CoherenceModelConfig, Variant};
use crate::training::{ensemble_predict, split_train_dev, train, SelectionMetric, TrainConfig};

pub const PRESETS: [&str; 4] = ["wsj-like", "yahoo-like", "clinton-like", "enron-like"];

/// Model and training settings for a named domain preset.
pub fn preset(name: &str) -> Result<(CoherenceModelConfig, TrainConfig)> {
    let binary = |alpha, beta| {
        (
            CoherenceModelConfig {
                variant: Variant::Mtl,
                levels: 2,
                embed_dim: 50,
                word_hidden: 100,
                sent_hidden: 100,
                num_classes: 1,
                alpha,
                beta,
                ..CoherenceModelConfig::default()
            },
            TrainConfig {
                selection_metric: SelectionMetric::Pra,
                ensemble_runs: 5,
                ..TrainConfig::default()
            },
        )
    };
    let graded = |sent_hidden, beta| {
        (
            CoherenceModelConfig {
                variant: Variant::Mtl,
                levels: 3,
                embed_dim: 300,
                word_hidden: 100,
                sent_hidden,
                para_hidden: 100,
                num_classes: 3,
                alpha: 1.0,
                beta,
                ..CoherenceModelConfig::default()
            },
            TrainConfig {
                selection_metric: SelectionMetric::Accuracy,
                ensemble_runs: 10,
                ..TrainConfig::default()
            },
        )
    };
    Ok(match name {
        "wsj-like" => binary(0.7, 0.3),
        "yahoo-like" => graded(100, 0.1),
        "clinton-like" => graded(200, 0.1),
        "enron-like" => graded(100, 0.2),
        other => {
            return Err(Error::config(
                "preset",
                format!(
                    "unknown preset `{other}`, expected one of {}",
                    PRESETS.join(", ")
                ),
            ))
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub model: CoherenceModelConfig,
    pub train: TrainConfig,
    pub train_path: PathBuf,
    /// A seeded 9:1 split of the training corpus is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings_path: Option<PathBuf>,
    pub output_dir: PathBuf,
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// Parses a run configuration. `model` and `train` may be partial: unset
    /// fields come from the preset, or from the library defaults without one.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut user: Value = serde_json::from_str(text)?;
        let preset_name = user
            .get("preset")
            .and_then(Value::as_str)
            .map(str::to_owned);
        let (model, train) = match &preset_name {
            Some(p) => preset(p)?,
            None => (CoherenceModelConfig::default(), TrainConfig::default()),
        };
        let obj = user
            .as_object_mut()
            .ok_or_else(|| Error::config("run config", "expected a JSON object"))?;
        for (key, base) in [
            ("model", serde_json::to_value(model)?),
            ("train", serde_json::to_value(train)?),
        ] {
            let mut merged = base;
            if let Some(v) = obj.remove(key) {
                if !v.is_object() {
                    return Err(Error::config(key, "expected a JSON object"));
                }
                merge(&mut merged, v);
            }
            obj.insert(key.into(), merged);
        }
        let cfg: RunConfig = serde_json::from_value(user)?;
        cfg.model.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths are taken relative to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.train_path);
        fix(&mut self.output_dir);
        for p in [
            &mut self.dev_path,
            &mut self.test_path,
            &mut self.embeddings_path,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// A complete config for `name` with placeholder paths.
    pub fn from_preset(name: &str) -> Result<Self> {
        let (model, train) = preset(name)?;
        Ok(RunConfig {
            preset: Some(name.to_owned()),
            model,
            train,
            train_path: "train.jsonl".into(),
            dev_path: None,
            test_path: None,
            embeddings_path: None,
            output_dir: format!("runs/{name}").into(),
        })
    }
}

/// 2 for bad data or configuration, 3 for numeric failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NumericFailure(_) => 3,
        _ => 2,
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<output>", e)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn parent_dir(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

pub fn cmd_permute(
    input: &Path,
    k: usize,
    seed: u64,
    output: &Path,
    out: &mut dyn Write,
) -> Result<PermuteSummary> {
    let corpus = Corpus::load(input)?;
    let (permuted, summary) = permute_corpus(&corpus, k, seed)?;
    parent_dir(output)?;
    permuted.write_jsonl(output)?;
    let name = input.file_name().map_or_else(
        || input.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    );
    writeln!(
        out,
        "{:<24} {:>8} {:>16} {:>8}",
        "corpus", "#docs", "#synthetic docs", "skipped"
    )
    .map_err(io_err)?;
    writeln!(
        out,
        "{:<24} {:>8} {:>16} {:>8}",
        name, summary.originals, summary.permutations, summary.skipped
    )
    .map_err(io_err)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub checkpoint: PathBuf,
    pub history: PathBuf,
}

pub fn checkpoint_path(dir: &Path, run: usize) -> PathBuf {
    dir.join(format!("checkpoint-{run}.json"))
}

pub fn history_path(dir: &Path, run: usize) -> PathBuf {
    dir.join(format!("history-{run}.csv"))
}

/// Trains `ensemble_runs` models with seeds `seed, seed + 1, ...` and writes
/// one checkpoint and history per run, plus the resolved config.
pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<RunSummary>> {
    cfg.model.validate()?;
    cfg.train.validate()?;
    let corpus = Corpus::load(&cfg.train_path)?;
    let (train_c, dev_c) = match &cfg.dev_path {
        Some(p) => (corpus, Corpus::load(p)?),
        None => {
            let (t, d) = split_train_dev(&corpus, cfg.train.seed)?;
            writeln!(
                out,
                "split {} documents into {} train / {} dev",
                corpus.len(),
                t.len(),
                d.len()
            )
            .map_err(io_err)?;
            (t, d)
        }
    };
    let embeddings = match &cfg.embeddings_path {
        Some(p) => Some(load_embeddings(p, cfg.model.embed_dim)?),
        None => None,
    };
    create_dir(&cfg.output_dir)?;
    let resolved = cfg.output_dir.join("run_config.json");
    fs::write(&resolved, cfg.to_json()?).map_err(|e| Error::io(&resolved, e))?;

    let mut runs = Vec::with_capacity(cfg.train.ensemble_runs);
    for run in 0..cfg.train.ensemble_runs {
        let seed = cfg.train.seed + run as u64;
        let train_cfg = TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        let outcome = train(
            &train_c,
            &dev_c,
            &cfg.model,
            &train_cfg,
            embeddings.as_ref(),
        )?;
        let summary = RunSummary {
            seed,
            best_epoch: outcome.best_epoch,
            best_metric: outcome.best_metric,
            checkpoint: checkpoint_path(&cfg.output_dir, run),
            history: history_path(&cfg.output_dir, run),
        };
        outcome.best.save(&summary.checkpoint)?;
        outcome.history.write_csv(&summary.history)?;
        writeln!(
            out,
            "run {run} (seed {seed}): best dev {:?} {:.4} at epoch {}",
            train_cfg.selection_metric, summary.best_metric, summary.best_epoch
        )
        .map_err(io_err)?;
        runs.push(summary);
    }
    Ok(runs)
}

/// A single checkpoint file, or every `checkpoint-*.json` in a directory in
/// name order.
pub fn checkpoint_paths(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("checkpoint-") && name.ends_with(".json") {
            paths.push(p);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no checkpoint-*.json files in {}",
            path.display()
        )));
    }
    Ok(paths)
}

/// Averages ensemble scores over `test` and writes the requested metrics to
/// `report` (default: `report.json` beside the checkpoints).
pub fn cmd_eval(
    checkpoints: &Path,
    test: &Path,
    metrics: &[Metric],
    report: Option<&Path>,
    out: &mut dyn Write,
) -> Result<EvalReport> {
    let models = checkpoint_paths(checkpoints)?
        .iter()
        .map(CoherenceModel::load)
        .collect::<Result<Vec<_>>>()?;
    let corpus = Corpus::load(test)?;
    let scores = corpus
        .iter()
        .map(|d| ensemble_predict(&models, d))
        .collect::<Result<Vec<_>>>()?;
    let result = evaluate(&corpus, &scores, metrics)?;
    let path = match report {
        Some(p) => p.to_path_buf(),
        None if checkpoints.is_dir() => checkpoints.join("report.json"),
        None => checkpoints.with_file_name("report.json"),
    };
    parent_dir(&path)?;
    fs::write(&path, result.to_json()? + "\n").map_err(|e| Error::io(&path, e))?;
    writeln!(out, "{} model(s), {} documents", models.len(), corpus.len()).map_err(io_err)?;
    for (name, v) in [
        ("pra", result.pra),
        ("tpra", result.tpra),
        ("accuracy", result.accuracy),
        ("pearson_r", result.pearson_r),
        ("pearson_r_raw", result.pearson_r_raw),
    ] {
        if let Some(v) = v {
            writeln!(out, "{name}: {v:.4}").map_err(io_err)?;
        }
    }
    writeln!(out, "report written to {}", path.display()).map_err(io_err)?;
    Ok(result)
}

pub fn cmd_saliency(
    checkpoint: &Path,
    corpus: &Path,
    doc_id: &str,
    html: &Path,
    out: &mut dyn Write,
) -> Result<Vec<TokenSaliency>> {
    let model = CoherenceModel::load(checkpoint)?;
    let corpus = Corpus::load(corpus)?;
    let doc = corpus
        .iter()
        .find(|d| d.id == doc_id)
        .ok_or_else(|| Error::InvalidInput(format!("no document with id `{doc_id}`")))?;
    let records = saliency(&model, doc)?;
    parent_dir(html)?;
    fs::write(html, saliency_html(doc, &records)?).map_err(|e| Error::io(html, e))?;
    writeln!(
        out,
        "{} tokens written to {}",
        records.len(),
        html.display()
    )
    .map_err(io_err)?;
    Ok(records)
}

/// Generates a synthetic corpus, optionally followed by up to `permutations`
/// permutations of each document.
pub fn cmd_synth(
    spec: &Path,
    output: &Path,
    permutations: Option<usize>,
    out: &mut dyn Write,
) -> Result<Corpus> {
    let text = fs::read_to_string(spec).map_err(|e| Error::io(spec, e))?;
    let spec: SynthSpec = serde_json::from_str(&text)?;
    let mut corpus = synth_corpus(&spec)?;
    if let Some(k) = permutations {
        corpus = permute_corpus(&corpus, k, spec.seed)?.0;
    }
    parent_dir(output)?;
    corpus.write_jsonl(output)?;
    writeln!(
        out,
        "{} documents ({} originals) written to {}",
        corpus.len(),
        corpus.originals().count(),
        output.display()
    )
    .map_err(io_err)?;
    Ok(corpus)
}

/// The full run configuration of a preset as pretty JSON.
pub fn cmd_config(name: &str) -> Result<String> {
    RunConfig::from_preset(name)?.to_json()
}
