use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dress::cli::config::Config;
use dress::cli::pipeline::{self, Workspace};
use dress::Result;

/// Sentence simplification with reinforcement learning.
#[derive(Debug, Parser)]
#[command(name = "dress", version)]
struct Cli {
    /// Work directory holding data, models, logs and manifests.
    #[arg(long, global = true, default_value = "work")]
    work: PathBuf,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set hidden=128`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Start from the small desk-scale preset instead of the full defaults.
    #[arg(long, global = true)]
    desk: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a rule-based parallel corpus with an edit log.
    GenSynthetic {
        /// Output directory (default: <work>/data).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        pairs: usize,
        #[arg(long, default_value_t = 200)]
        valid: usize,
    },
    /// Anonymize entities and build the vocabulary.
    Preprocess {
        /// Directory with train/valid corpora and a gazetteer (default: <work>/data).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train a model by maximum likelihood.
    Train {
        #[arg(long, value_parser = ["seq2seq", "sae", "lm"], default_value = "seq2seq")]
        component: String,
        /// Stop after this many epochs; rerun to resume.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Fine-tune the encoder-decoder with REINFORCE.
    TrainRl {
        /// Auto-encoder checkpoint (default: <work>/models/sae.ckpt).
        #[arg(long)]
        sae: Option<PathBuf>,
        /// Language model checkpoint (default: <work>/models/lm.ckpt).
        #[arg(long)]
        lm: Option<PathBuf>,
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Train the lexical simplification model.
    TrainLexsimp {
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Simplify one sentence per line.
    Simplify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Policy checkpoint (default: <work>/models/rl.ckpt).
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Lexical model weight; 0 disables it (default from config).
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Score system outputs and write a JSON report.
    Evaluate {
        #[arg(long)]
        sources: PathBuf,
        #[arg(long)]
        outputs: PathBuf,
        /// Reference file, one sentence per line; repeat for several references.
        #[arg(long = "refs", required = true)]
        refs: Vec<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
}

fn config(cli: &Cli) -> Result<Config> {
    let mut cfg = if cli.desk { Config::desk() } else { Config::default() };
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for pair in &cli.overrides {
        cfg.set_pair(pair)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = config(&cli)?;
    let ws = Workspace::new(&cli.work);
    match cli.command {
        Command::GenSynthetic { out, pairs, valid } => {
            let out = out.unwrap_or_else(|| ws.data_dir());
            pipeline::gen_synthetic(&ws, &out, pairs, valid, &cfg)
        }
        Command::Preprocess { data } => pipeline::preprocess(&ws, &data.unwrap_or_else(|| ws.data_dir()), &cfg),
        Command::Train { component, stop_after } => pipeline::train(&ws, &cfg, &component, stop_after).map(drop),
        Command::TrainRl { sae, lm, stop_after } => {
            pipeline::train_rl(&ws, &cfg, sae.as_deref(), lm.as_deref(), stop_after).map(drop)
        }
        Command::TrainLexsimp { stop_after } => pipeline::train_lexsimp(&ws, &cfg, stop_after).map(drop),
        Command::Simplify {
            input,
            output,
            policy,
            eta,
        } => pipeline::simplify(&ws, &cfg, &input, &output, policy.as_deref(), eta.unwrap_or(cfg.eta)),
        Command::Evaluate {
            sources,
            outputs,
            refs,
            report,
        } => {
            let json = pipeline::evaluate(&ws, &cfg, &sources, &outputs, &refs, &report)?;
            print!("{json}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.kind(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
