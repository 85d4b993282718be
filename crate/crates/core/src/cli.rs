//! Command-line interface.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::coding::BitMessage;
use crate::cover::{FinetuneRecipe, LocatingStrategy, MaskingStrategy, SiteCount, StegoKey, DEFAULT_MODEL_ID};
use crate::error::{Error, Result};
use crate::eval::{self, GridConfig};
use crate::extractor;
use crate::model::pretrain::{self, PretrainConfig};
use crate::trainer::{self, ModelArtifact};
use crate::util;

/// Exit codes, stable across releases.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const FAILURE: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const IO: u8 = 3;
    pub const CAPACITY_EXCEEDED: u8 = 4;
    pub const NON_CONVERGENCE: u8 = 5;
    pub const FINGERPRINT_MISMATCH: u8 = 6;
    pub const ARTIFACT_CORRUPT: u8 = 7;
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::CapacityExceeded { .. } => exit::CAPACITY_EXCEEDED,
        Error::NonConvergence { .. } => exit::NON_CONVERGENCE,
        Error::FingerprintMismatch { .. } => exit::FINGERPRINT_MISMATCH,
        Error::ArtifactCorrupt(_) | Error::UnsupportedSchema { what: "artifact", .. } => exit::ARTIFACT_CORRUPT,
        Error::Io { .. } => exit::IO,
        Error::InvalidConfig(_) | Error::InvalidMessage(_) | Error::UnsupportedSchema { .. } | Error::Json(_) => {
            exit::CONFIG
        }
        _ => exit::FAILURE,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "clstega",
    version,
    about = "Hide bits in an unmodified cover text by fine-tuning a masked language model"
)]
pub struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a key file.
    Keygen(KeygenArgs),
    /// Fine-tune a model artifact that carries a message for a cover text.
    Embed(EmbedArgs),
    /// Read the message of a stego text back with a key and artifact.
    Extract(ExtractArgs),
    /// Run an experiment grid and write per-cell reports.
    Eval(EvalArgs),
    /// Pretrain the bundled default model into a directory.
    Pretrain(PretrainArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    #[value(name = "NFW", alias = "nfw")]
    Nfw,
    #[value(name = "FW", alias = "fw")]
    Fw,
    #[value(name = "AW", alias = "aw")]
    Aw,
}

impl From<StrategyArg> for LocatingStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Nfw => LocatingStrategy::NonFunctional,
            StrategyArg::Fw => LocatingStrategy::Functional,
            StrategyArg::Aw => LocatingStrategy::AllWords,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MaskingArg {
    #[value(name = "SPAM", alias = "spam")]
    Spam,
    #[value(name = "FPM", alias = "fpm")]
    Fpm,
}

impl From<MaskingArg> for MaskingStrategy {
    fn from(m: MaskingArg) -> Self {
        match m {
            MaskingArg::Spam => MaskingStrategy::SinglePosition,
            MaskingArg::Fpm => MaskingStrategy::FullPosition,
        }
    }
}

#[derive(Debug, Args)]
pub struct KeygenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "NFW")]
    pub strategy: StrategyArg,
    /// Sites per sentence, or ALL.
    #[arg(long, default_value = "2")]
    pub k: String,
    #[arg(long, value_enum, default_value = "SPAM")]
    pub masking: MaskingArg,
    /// Model directory or name under the model cache.
    #[arg(long, default_value = DEFAULT_MODEL_ID)]
    pub model: String,
    #[arg(long, default_value_t = 10)]
    pub min_words: usize,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("msg").required(true).args(["message", "message_hex"]))]
pub struct EmbedArgs {
    #[arg(long)]
    pub cover: PathBuf,
    /// Message as a string of 0 and 1 characters (may be empty).
    #[arg(long)]
    pub message: Option<String>,
    /// Message as LEN:HEX or bare hex.
    #[arg(long)]
    pub message_hex: Option<String>,
    #[arg(long)]
    pub key: PathBuf,
    /// Artifact directory to create.
    #[arg(long)]
    pub out: PathBuf,
    /// Training report path; `<out>/report.json` by default.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Overrides the key's epoch cap.
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Overrides the key's training seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OutputFormat {
    Bits,
    Hex,
    Both,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Stego text file.
    #[arg(long, alias = "stego")]
    pub cover: PathBuf,
    #[arg(long)]
    pub key: PathBuf,
    #[arg(long)]
    pub artifact: PathBuf,
    #[arg(long, value_enum, default_value = "bits")]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Grid configuration JSON; built-in defaults when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Restricts the grid to one locating strategy.
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// Restricts the grid to one k.
    #[arg(long)]
    pub k: Option<String>,
    /// Restricts the grid to one masking strategy.
    #[arg(long, value_enum)]
    pub masking: Option<MaskingArg>,
    /// Summary JSON path in addition to `<out>/summary.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_k(k: &str) -> Result<SiteCount> {
    k.parse()
}

pub fn cmd_keygen(args: &KeygenArgs) -> Result<StegoKey> {
    let mut finetune = FinetuneRecipe::for_model(&args.model);
    if let Some(v) = args.learning_rate {
        finetune.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        finetune.batch_size = v;
    }
    if let Some(v) = args.weight_decay {
        finetune.weight_decay = v;
    }
    if let Some(v) = args.max_epochs {
        finetune.max_epochs = v;
    }
    if let Some(v) = args.seed {
        finetune.seed = v;
    }
    let key = StegoKey {
        locating_strategy: args.strategy.into(),
        k: parse_k(&args.k)?,
        masking_strategy: args.masking.into(),
        model_id: args.model.clone(),
        tokenizer_id: args.model.clone(),
        min_sentence_words: args.min_words,
        finetune,
        ..StegoKey::default()
    };
    key.save(&args.out)?;
    Ok(key)
}

fn parse_message(args: &EmbedArgs) -> Result<BitMessage> {
    match (&args.message, &args.message_hex) {
        (Some(bits), None) => BitMessage::from_bit_string(bits),
        (None, Some(hex)) => BitMessage::from_hex(hex),
        _ => Err(Error::InvalidMessage(
            "give exactly one of --message and --message-hex".into(),
        )),
    }
}

pub fn cmd_embed(args: &EmbedArgs) -> Result<trainer::TrainingReport> {
    let message = parse_message(args)?;
    let mut key = StegoKey::load(&args.key)?;
    if let Some(e) = args.max_epochs {
        key.finetune.max_epochs = e;
    }
    if let Some(s) = args.seed {
        key.finetune.seed = s;
    }
    let cover = util::read_to_string(&args.cover)?;
    let outcome = trainer::embed(&cover, &message, &key, &args.out)?;
    let report_path = args.report.clone().unwrap_or_else(|| args.out.join("report.json"));
    util::write_json(&report_path, &outcome.report)?;
    let r = &outcome.report;
    println!("capacity_bits\t{}", outcome.plan.capacity_bits);
    println!("message_bits\t{}", message.len());
    println!("epochs\t{}", r.epochs_run);
    println!("converged\t{}", r.converged);
    if !r.converged {
        return Err(Error::NonConvergence {
            epochs: r.epochs_run,
            last_esr: r.esr_by_epoch.last().copied().unwrap_or(r.initial_esr),
        });
    }
    Ok(outcome.report)
}

pub fn cmd_extract(args: &ExtractArgs) -> Result<BitMessage> {
    let key = StegoKey::load(&args.key)?;
    let text = util::read_to_string(&args.cover)?;
    let artifact = ModelArtifact::load(&args.artifact)?;
    let message = extractor::extract(&text, &key, &artifact)?;
    match args.format {
        OutputFormat::Bits => println!("{}", message.to_bit_string()),
        OutputFormat::Hex => println!("{}", message.to_hex()),
        OutputFormat::Both => {
            println!("{}", message.to_bit_string());
            println!("{}", message.to_hex());
        }
    }
    Ok(message)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<Vec<eval::CellResult>> {
    let mut cfg = match &args.config {
        Some(path) => util::read_json(path)?,
        None => GridConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(e) = args.max_epochs {
        cfg.max_epochs = Some(e);
    }
    if let Some(s) = args.strategy {
        cfg.strategies = vec![s.into()];
    }
    if let Some(k) = &args.k {
        cfg.k = vec![parse_k(k)?];
    }
    if let Some(m) = args.masking {
        cfg.masking = vec![m.into()];
    }
    util::create_dir_all(&args.out)?;
    let results = eval::run_grid(&cfg, &args.out)?;
    if let Some(path) = &args.report {
        util::write_json(path, &results)?;
    }
    print!("{}", eval::summary_table(&results));
    Ok(results)
}

pub fn cmd_pretrain(args: &PretrainArgs) -> Result<()> {
    let mut cfg = PretrainConfig::default();
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let (lm, report) = pretrain::pretrain(&cfg)?;
    lm.save_dir(&args.out)?;
    util::write_json(&args.out.join("pretrain_report.json"), &report)?;
    println!("final_loss\t{:.4}", report.final_loss);
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Keygen(a) => cmd_keygen(a).map(|_| ()),
        Command::Embed(a) => cmd_embed(a).map(|_| ()),
        Command::Extract(a) => cmd_extract(a).map(|_| ()),
        Command::Eval(a) => cmd_eval(a).map(|_| ()),
        Command::Pretrain(a) => cmd_pretrain(a),
    }
}

/// Parses arguments, runs the command and maps errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::CONFIG } else { exit::SUCCESS });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(&cli) {
        Ok(()) => ExitCode::from(exit::SUCCESS),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
