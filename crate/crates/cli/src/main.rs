//! Command-line front end for the dictionary-attachment toolkit.
//!
//! Exit codes: 0 on success, 2 on any error. `significance` exits 0 when the
//! difference is significant and 1 when it is not.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "dictattach", version, about = "Attach dictionary definitions to rare words for NMT")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DictFormat {
    Cedict,
    Tsv,
}

/// Experiment settings: a config file plus explicit overrides.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Flat `key = value` experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// baseline, append, fuse or attach.
    #[arg(long)]
    condition: Option<String>,
    /// Frequency threshold (a count or `inf`).
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// word or bpe.
    #[arg(long)]
    segmentation: Option<String>,
    #[arg(long)]
    dictionary: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Any other config key, as `key=value`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Clean a CEDICT or TSV dictionary into canonical TSV.
    CleanDict {
        #[arg(long, value_enum)]
        format: DictFormat,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Leave `see c` references in place (CEDICT).
        #[arg(long)]
        no_resolve_refs: bool,
        /// Longest `see` chain followed (CEDICT).
        #[arg(long, default_value_t = 5)]
        max_ref_depth: usize,
        /// Definitions are already tokenized (TSV).
        #[arg(long)]
        pretokenized: bool,
        /// Write skipped lines and deleted entries here as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Split a parallel corpus into train, dev and test by contiguous blocks.
    Split {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Train, dev and test fractions.
        #[arg(long, default_value = "0.8,0.1,0.1")]
        fractions: String,
    },
    /// Learn joint BPE merges on a parallel corpus.
    LearnBpe {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        ops: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Segment text with learned merges (or undo segmentation).
    ApplyBpe {
        #[arg(long)]
        codes: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Remove `@@` markers instead of segmenting.
        #[arg(long)]
        undo: bool,
    },
    /// Apply a condition to the corpora and write the prepared data.
    Prepare {
        #[command(flatten)]
        config: ConfigArgs,
        /// Defaults to the config's output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Train on prepared data and write the best checkpoint.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory written by `prepare`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Translate attached JSONL (or plain text) with a checkpoint.
    Translate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Input is plain tokenized text rather than attached JSONL.
        #[arg(long)]
        plain: bool,
        #[arg(long, default_value_t = 4)]
        beam: usize,
        /// Write cross-attention JSON and SVG heatmaps for each sentence here.
        #[arg(long)]
        attention_dir: Option<PathBuf>,
    },
    /// Corpus BLEU of a hypothesis file against references.
    Evaluate {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        case_sensitive: bool,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Paired bootstrap significance test between two systems.
    Significance {
        #[arg(long)]
        hyp_a: PathBuf,
        #[arg(long)]
        hyp_b: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0.05)]
        level: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        case_sensitive: bool,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run the attach condition once per threshold and plot dev BLEU.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated thresholds, e.g. `0,5,10,inf`.
        #[arg(long)]
        thresholds: String,
    },
    /// Generate the synthetic rare-word task.
    GenSynthetic {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 5000)]
        train_pairs: usize,
        #[arg(long, default_value_t = 500)]
        dev_pairs: usize,
        #[arg(long, default_value_t = 500)]
        test_pairs: usize,
        #[arg(long, default_value_t = 150)]
        common_types: usize,
        #[arg(long, default_value_t = 1500)]
        train_rare_types: usize,
        #[arg(long, default_value_t = 200)]
        heldout_rare_types: usize,
        #[arg(long, default_value_t = 3)]
        max_train_count: usize,
        #[arg(long, default_value_t = 0.05)]
        rare_fraction: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run one experiment end to end.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match commands::dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
