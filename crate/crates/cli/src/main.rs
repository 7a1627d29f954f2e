//! `bitext`: quantize, merge, score, build corpora and sample evaluation
//! sets from one binary.
//!
//! Exit codes: 0 success, 1 operational failure, 2 usage error.

mod cmd;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use config::EndpointArgs;

#[derive(Debug, Parser)]
#[command(name = "bitext", version, about = "Translate-and-tune data and model tooling")]
pub struct Cli {
    /// Flat TOML file with defaults; flags win over it
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// More log output on stderr (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Run data-parallel stages on one thread
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    All,
    Bleu,
    Chrf,
    Rouge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnMissing {
    Error,
    Copy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TranslateMode {
    /// Instruction records in, bilingual tuples out
    Tuples,
    /// Any records in, one field translated into `translation`
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TemplateArg {
    Teacher,
    Lightweight,
    Plain,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// FP8 E4M3 per-tensor dynamic quantization of a safetensors checkpoint
    Quantize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Glob of tensor names to keep at source precision (repeatable)
        #[arg(long = "skip", value_name = "GLOB")]
        skip: Vec<String>,
    },
    /// Slerp two checkpoints tensor by tensor
    Merge {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        t: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = OnMissing::Error)]
        on_missing: OnMissing,
        /// Below this sin(angle) tensors are lerped instead
        #[arg(long, default_value_t = 1e-8)]
        eps: f64,
    },
    /// Corpus BLEU, chrF++ and ROUGE-L of line-aligned text files
    Score {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, value_enum, default_value_t = Metric::All)]
        metric: Metric,
        /// Print JSON instead of text
        #[arg(long)]
        json: bool,
        /// Also write all three scores at full precision to this JSON file
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
    /// Print 13a tokens of each input line
    Tokenize {
        /// Defaults to stdin
        #[arg(long = "in")]
        input: Option<PathBuf>,
    },
    /// Translate a corpus through a chat endpoint
    TranslateCorpus {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = TranslateMode::Tuples)]
        mode: TranslateMode,
        /// Field to translate in text mode
        #[arg(long, default_value = "text")]
        field: String,
        #[arg(long, value_enum, default_value_t = TemplateArg::Teacher)]
        template: TemplateArg,
        /// Also write the {ar, en} pairs of each tuple here
        #[arg(long, value_name = "FILE")]
        directed: Option<PathBuf>,
        #[arg(long)]
        state: Option<PathBuf>,
        #[command(flatten)]
        endpoint: EndpointArgs,
    },
    /// Keep the {ar, en} pairs a judge model accepts
    Judge {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        state: Option<PathBuf>,
        /// Write filter counts as JSON here
        #[arg(long)]
        stats: Option<PathBuf>,
        #[command(flatten)]
        endpoint: EndpointArgs,
    },
    /// Pair Arabic translations with their English records
    Pair {
        #[arg(long, requires_all = ["instr_ar", "resp_ar", "out"], conflicts_with = "tuples")]
        records: Option<PathBuf>,
        #[arg(long)]
        instr_ar: Option<PathBuf>,
        #[arg(long)]
        resp_ar: Option<PathBuf>,
        /// Field holding the Arabic text in the translation files
        #[arg(long, default_value = "translation")]
        ar_field: String,
        /// Existing tuples to expand instead of building new ones
        #[arg(long)]
        tuples: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write two {ar, en} pairs per tuple here
        #[arg(long)]
        directed: Option<PathBuf>,
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Drop instruction records that look like code
    FilterCode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        min_code_lines: usize,
        #[arg(long, default_value_t = 0.30)]
        symbol_ratio: f64,
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Concatenate corpora and write a count manifest
    Mix {
        /// LABEL=PATH or LABEL=PATH:COUNT (repeatable, in output order)
        #[arg(long = "source", required = true)]
        sources: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to OUT with a .manifest.json suffix
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, requires = "seed")]
        shuffle: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Seeded sample of English questions aligned to Arabic references
    SampleEval {
        #[arg(long)]
        en: PathBuf,
        #[arg(long)]
        ar: PathBuf,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Directory for sample.jsonl, pairs.jsonl and misses.jsonl
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score system outputs against aligned references
    Report {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        outputs: PathBuf,
        #[arg(long)]
        name: String,
        /// Field of the outputs file holding the system text
        #[arg(long, default_value = "translation")]
        field: String,
        /// Defaults to OUTPUTS with a .report.json suffix
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Tensor(#[from] bitext::tensorio::TensorIoError),
    #[error(transparent)]
    Quant(#[from] bitext::quant::QuantError),
    #[error(transparent)]
    Merge(#[from] bitext::merge::MergeError),
    #[error(transparent)]
    Metric(#[from] bitext::mtmetrics::MetricError),
    #[error(transparent)]
    Pipeline(#[from] bitext::pipeline::PipelineError),
    #[error(transparent)]
    State(#[from] bitext::pipeline::StateError),
    #[error(transparent)]
    Eval(#[from] bitext::evalset::EvalError),
    #[error(transparent)]
    Inference(#[from] bitext::inference::InferenceError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn init_logging(verbose: u8, configured: Option<&str>) {
    let level = match verbose {
        0 => configured.unwrap_or("warn"),
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::new()
        .parse_filters(level)
        .parse_env("BITEXT_LOG")
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let file = match cli.config.as_deref().map(config::FileConfig::load).transpose() {
        Ok(f) => f.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    init_logging(cli.verbose, file.verbosity.as_deref());
    if cli.sequential {
        bitext::set_parallelism(false);
    }
    match cmd::run(cli.command, &file) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
