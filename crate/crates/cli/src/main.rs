//! `mgdil`: drives ingestion, summarization, corpus construction, training
//! and the evaluation experiments from the command line.

mod config;
mod data;
mod experiment;
mod graph_cmd;
mod logging;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{EncoderArg, PipelineConfig, SummarizerArg, VariantArg};
use mgdil_learn::bench::ablation::SweepWeight;

/// Bad invocation that clap cannot catch on its own (missing input,
/// incompatible options). Exits with status 2 like clap's own errors.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "mgdil", version, about = "Cross-domain social bot detection pipeline")]
struct Cli {
    /// Pipeline configuration (TOML). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for training, splitting and balancing.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long, global = true, value_enum)]
    summarizer: Option<SummarizerArg>,
    #[arg(long, global = true, value_enum)]
    encoder: Option<EncoderArg>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

/// Where labeled vectors come from.
#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct DataArgs {
    /// Instruction corpus (JSON lines) to encode.
    #[arg(long)]
    pub docs: Option<PathBuf>,
    /// Synthetic domain-shift benchmark spec; the shipped one when no path is given.
    #[arg(long, num_args = 0..=1, default_missing_value = "builtin", value_name = "SPEC")]
    pub synthetic: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    /// Domain-labeled rows.
    Source,
    /// Rows without a domain (evaluation period or synthetic target).
    Target,
    All,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse, dedupe and balance the registered sources into one corpus.
    Ingest {
        /// Source registry (TOML with one [[source]] per dataset).
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Keep every record instead of downsampling bots.
        #[arg(long)]
        no_balance: bool,
    },
    /// Render profile slots and write the feature table.
    Featurize {
        #[arg(long)]
        corpus: PathBuf,
        /// Directory with lexicon overrides.
        #[arg(long)]
        lexicons: Option<PathBuf>,
    },
    /// Summarize post histories into the five-dimension sentence.
    Summarize {
        #[arg(long)]
        corpus: PathBuf,
        /// Keyword lexicon for the offline summarizer.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Prompt template with a {posts_content} placeholder.
        #[arg(long)]
        prompt: Option<PathBuf>,
    },
    /// Assemble instruction documents.
    Build {
        #[arg(long)]
        corpus: PathBuf,
        /// Summary sidecar from `summarize`; required for meta-summary.
        #[arg(long)]
        summaries: Option<PathBuf>,
        #[arg(long)]
        lexicons: Option<PathBuf>,
    },
    /// Train one model; optionally the whole seed suite.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Also train every configured seed and report mean ± std.
        #[arg(long)]
        suite: bool,
        /// Seeds for the suite, comma separated.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Evaluate a checkpoint on labeled data.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum)]
        split: Option<Split>,
    },
    /// Full model against its three ablations, every seed.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Skip the domain probe on source latents.
        #[arg(long)]
        no_probe: bool,
    },
    /// Vary one loss weight with the other pinned.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_parser = parse_weight)]
        which: SweepWeight,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Linear domain probe on frozen latents.
    Probe {
        /// Probe this checkpoint; without it, train the full model and the
        /// no-adversarial ablation and compare.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Per-dataset label distribution of the post summaries.
    Report {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        summaries: PathBuf,
    },
    /// Finite-difference check of every loss gradient.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        batches: usize,
    },
    /// Train the relational stage on frozen latents.
    GraphTrain {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        docs: PathBuf,
        /// Edge list (src,relation,dst). Without it, relations come from --corpus.
        #[arg(long)]
        edges: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Share of labeled nodes held out from the loss.
        #[arg(long, default_value_t = 0.2)]
        held_out: f64,
    },
    /// Evaluate a relational-stage checkpoint.
    GraphEval {
        #[arg(long)]
        graph_checkpoint: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        docs: PathBuf,
        #[arg(long)]
        edges: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Node split file from `graph-train`; restricts scoring to its test nodes.
        #[arg(long)]
        split_file: Option<PathBuf>,
    },
}

fn parse_weight(s: &str) -> Result<SweepWeight, String> {
    s.parse().map_err(|e: mgdil_learn::LearnError| e.to_string())
}

/// Settings after applying flag overrides to the config file.
pub struct Ctx {
    pub cfg: PipelineConfig,
    pub seed: Option<u64>,
}

impl Ctx {
    pub fn out_path(&self, name: &str) -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(&self.cfg.out)
            .map_err(|e| anyhow::anyhow!("creating {}: {e}", self.cfg.out.display()))?;
        Ok(self.cfg.out.join(name))
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => {
            if !p.exists() {
                return Err(usage(format!("config file {} does not exist", p.display())));
            }
            PipelineConfig::load(p)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(v) = cli.variant {
        cfg.variant = v;
    }
    if let Some(s) = cli.summarizer {
        cfg.summarizer = s;
    }
    if let Some(e) = cli.encoder {
        cfg.encoder = e;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    let ctx = Ctx { cfg, seed: cli.seed };
    match cli.command {
        Command::Ingest { registry, no_balance } => pipeline::ingest(&ctx, registry, no_balance),
        Command::Featurize { corpus, lexicons } => pipeline::featurize(&ctx, &corpus, lexicons.as_deref()),
        Command::Summarize { corpus, lexicon, prompt } => {
            pipeline::summarize(&ctx, &corpus, lexicon.as_deref(), prompt.as_deref())
        }
        Command::Build { corpus, summaries, lexicons } => {
            pipeline::build(&ctx, &corpus, summaries.as_deref(), lexicons.as_deref())
        }
        Command::Report { corpus, summaries } => pipeline::report(&ctx, &corpus, &summaries),
        Command::Train { data, suite, seeds } => experiment::train(&ctx, &data, suite, seeds),
        Command::Eval { checkpoint, data, split } => experiment::eval(&ctx, &checkpoint, &data, split),
        Command::Ablate { data, seeds, no_probe } => experiment::ablate(&ctx, &data, seeds, !no_probe),
        Command::Sweep { data, which, values, seeds } => experiment::sweep(&ctx, &data, which, &values, seeds),
        Command::Probe { checkpoint, data, seeds } => experiment::probe(&ctx, checkpoint.as_deref(), &data, seeds),
        Command::Gradcheck { batches } => experiment::gradcheck(&ctx, batches),
        Command::GraphTrain { checkpoint, docs, edges, corpus, held_out } => graph_cmd::train(
            &ctx,
            &checkpoint,
            &docs,
            graph_cmd::EdgeSource::new(edges, corpus)?,
            held_out,
        ),
        Command::GraphEval { graph_checkpoint, checkpoint, docs, edges, corpus, split_file } => graph_cmd::eval(
            &ctx,
            &graph_checkpoint,
            &checkpoint,
            &docs,
            graph_cmd::EdgeSource::new(edges, corpus)?,
            split_file.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    logging::init(cli.verbose, cli.quiet);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
