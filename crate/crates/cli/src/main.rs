use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coherence::cli::{
    cmd_config, cmd_eval, cmd_permute, cmd_saliency, cmd_synth, cmd_train, exit_code, RunConfig,
};
use coherence::evaluation::parse_metrics;

#[derive(Parser)]
#[command(
    name = "coherence",
    version,
    about = "Neural discourse coherence scoring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Add sentence-order permutations of every document.
    Permute {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train one model per ensemble run from a run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a test corpus with an ensemble and write report.json.
    Eval {
        /// A checkpoint file or a directory of checkpoint-*.json files.
        #[arg(long)]
        checkpoints: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Comma-separated: pra, tpra, accuracy, pearson, pearson_raw.
        #[arg(long, default_value = "pra,tpra")]
        metrics: String,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Render per-token gradient saliency of one document as HTML.
    Saliency {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        doc: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus from a JSON spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also add up to this many permutations per document.
        #[arg(long)]
        permutations: Option<usize>,
    },
    /// Print the run configuration of a preset.
    Config {
        #[arg(long, default_value = "wsj-like")]
        preset: String,
    },
}

fn run(command: Command) -> coherence::Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match command {
        Command::Permute {
            input,
            k,
            seed,
            output,
        } => {
            cmd_permute(&input, k, seed, &output, &mut out)?;
        }
        Command::Train { config } => {
            cmd_train(&RunConfig::load(&config)?, &mut out)?;
        }
        Command::Eval {
            checkpoints,
            test,
            metrics,
            report,
        } => {
            cmd_eval(
                &checkpoints,
                &test,
                &parse_metrics(&metrics)?,
                report.as_deref(),
                &mut out,
            )?;
        }
        Command::Saliency {
            checkpoint,
            corpus,
            doc,
            out: html,
        } => {
            cmd_saliency(&checkpoint, &corpus, &doc, &html, &mut out)?;
        }
        Command::Synth {
            spec,
            out: output,
            permutations,
        } => {
            cmd_synth(&spec, &output, permutations, &mut out)?;
        }
        Command::Config { preset } => {
            let _ = writeln!(out, "{}", cmd_config(&preset)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
