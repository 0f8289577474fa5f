//! Command-line driver: corpus generation, analysis, training, prediction,
//! evaluation and ablations.

mod commands;
mod error;

use clap::{Args, Parser, Subcommand};
use error::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "typebridge", version, about = "Cross-dialect type inference with kernelized attention")]
pub struct Cli {
    /// JSON experiment config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice of the invocation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Maximum worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled dataset.
    Gen(GenArgs),
    /// Write type-closeness sidecars for programs.
    Analyze(AnalyzeArgs),
    /// Print the AST and meta-grammar tags of one program.
    Debug(DebugArgs),
    /// Pretrain an encoder on programs of both dialects.
    Pretrain(PretrainArgs),
    /// Fine-tune a pretrained encoder for type prediction.
    Finetune(FinetuneArgs),
    /// Predict types at annotation sites.
    Predict(PredictArgs),
    /// Score predictions against gold labels.
    Eval(EvalArgs),
    /// Run the ablation variants on generated transfer data.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub dialect: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub min_statements: Option<usize>,
    #[arg(long)]
    pub max_statements: Option<usize>,
    #[arg(long)]
    pub profiles: Option<u32>,
    /// Also write a train/validation/test split manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Split ratios as `train,validation,test`.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    pub ratios: String,
    /// `intra` or `inter` (profiles kept within one split).
    #[arg(long, default_value = "intra")]
    pub mode: String,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Dataset file; one sidecar line is written per program.
    #[arg(long, conflicts_with = "source", required_unless_present = "source")]
    pub input: Option<PathBuf>,
    /// Program text to analyze instead of a dataset.
    #[arg(long, requires = "dialect")]
    pub source: Option<String>,
    #[arg(long)]
    pub dialect: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DebugArgs {
    #[arg(long, conflicts_with = "input", required_unless_present = "input", requires = "dialect")]
    pub source: Option<String>,
    #[arg(long)]
    pub dialect: Option<String>,
    #[arg(long, requires = "id")]
    pub input: Option<PathBuf>,
    /// Program id within `--input`.
    #[arg(long)]
    pub id: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// `kernel` or `plain`.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Training log (JSON).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Dataset files; together they must hold both dialects.
    #[arg(long, required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub no_syntax_enhancement: bool,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Labeled source-dialect programs.
    #[arg(long)]
    pub source: PathBuf,
    /// Labeled target-dialect programs.
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub validation: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// `no-target`, `partial-target:F` or `augmentation:F`.
    #[arg(long)]
    pub scenario: Option<String>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// A single model.
    #[arg(long, conflicts_with_all = ["plain", "kernel", "lambda", "validation"], required_unless_present_all = ["plain", "kernel"])]
    pub checkpoint: Option<PathBuf>,
    /// Plain submodel of the ensemble.
    #[arg(long, requires = "kernel")]
    pub plain: Option<PathBuf>,
    /// Kernelized submodel of the ensemble.
    #[arg(long, requires = "plain")]
    pub kernel: Option<PathBuf>,
    /// Ensemble weight of the kernelized submodel.
    #[arg(long, conflicts_with = "validation")]
    pub lambda: Option<f64>,
    /// Labeled programs used to select the ensemble weight.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub source_programs: Option<usize>,
    #[arg(long)]
    pub target_programs: Option<usize>,
    #[arg(long)]
    pub eval_programs: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("{}", CliError::Internal(e.to_string()));
            return ExitCode::from(3);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
