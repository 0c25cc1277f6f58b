//! `forge` — CLI for the perturbation toolkit and benchmark harness.
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime error, 64 usage.

mod commands;
mod config;

use clap::error::ErrorKind;
use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "forge", version, about = "Perturbed toxic-Chinese dataset builder and LLM detection benchmark")]
struct Cli {
    /// Route all model calls to a scripted backend: a JSON file mapping
    /// sample id to canned reply ("*" is the fallback key).
    #[arg(long, global = true, value_name = "SCRIPT")]
    mock: Option<PathBuf>,

    /// TOML config file (endpoint registry and defaults); flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand)]
enum Command {
    /// Knowledge-base table operations.
    #[command(subcommand)]
    Kb(KbCommand),
    /// Apply one perturbation type to a record file.
    Perturb(PerturbArgs),
    /// Dataset pipeline: build, annotation round-trip.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Evaluate a model over a built dataset.
    Eval(EvalArgs),
    /// Export a fine-tuning file with its hyperparameter sidecar.
    ExportFt(ExportFtArgs),
    /// Render report tables from eval results.
    Report(ReportArgs),
}

#[derive(clap::Subcommand)]
enum KbCommand {
    /// Parse the tables, print entry counts and every violation.
    Validate {
        #[arg(long, value_name = "DIR")]
        tables: PathBuf,
    },
}

#[derive(clap::Args)]
struct PerturbArgs {
    /// vsim | split | trad | py_init | py_full | homo | shuff | emoji
    #[arg(long = "type", value_name = "TYPE")]
    ptype: String,
    #[arg(long, default_value_t = 0.3)]
    rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    #[arg(long = "out", value_name = "FILE")]
    output: PathBuf,
    #[arg(long, value_name = "DIR")]
    tables: PathBuf,
    /// Toxic-term lexicon for span extraction (default: spans from --spans).
    #[arg(long, value_name = "FILE")]
    lexicon: Option<PathBuf>,
    /// Pre-extracted spans (spans.jsonl from a dataset build).
    #[arg(long, value_name = "FILE")]
    spans: Option<PathBuf>,
    /// lower | upper
    #[arg(long = "pinyin-case", default_value = "lower")]
    pinyin_case: String,
}

#[derive(clap::Subcommand)]
enum DatasetCommand {
    /// Run the pipeline (resumable; stops at the annotation gate).
    Build(DatasetBuildArgs),
    /// Re-export the annotation worksheet.
    AnnotateExport {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, value_name = "FILE")]
        file: Option<PathBuf>,
    },
    /// Import a filled-in annotation worksheet.
    AnnotateImport {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, value_name = "FILE")]
        file: PathBuf,
    },
}

#[derive(clap::Args)]
struct DatasetBuildArgs {
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    #[arg(long, value_name = "DIR")]
    tables: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "toxic-n")]
    toxic_n: Option<usize>,
    #[arg(long = "nontoxic-n")]
    nontoxic_n: Option<usize>,
    #[arg(long)]
    rate: Option<f64>,
    /// Comma-separated subset of types (default: all eight).
    #[arg(long)]
    types: Option<String>,
    #[arg(long, value_name = "FILE")]
    lexicon: Option<PathBuf>,
    /// Extract entities with this config endpoint instead of the lexicon.
    #[arg(long = "extract-model", value_name = "NAME")]
    extract_model: Option<String>,
    #[arg(long, default_value_t = 3.0)]
    threshold: f64,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Endpoint name from the config registry (or any label under --mock).
    #[arg(long)]
    model: String,
    /// CN | ENG | CN_Concise | CN_Detailed | ENG_Concise | ENG_Detailed | CACOT
    #[arg(long)]
    template: Option<String>,
    /// ICL example block (JSONL), exactly 10 examples per covered type.
    #[arg(long, value_name = "FILE")]
    icl: Option<PathBuf>,
    /// Dataset directory produced by `forge dataset build`.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long = "cache-dir", value_name = "DIR")]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict to a slice: all | base | nontoxic | one type tag.
    #[arg(long, default_value = "all")]
    slice: String,
}

#[derive(clap::Args)]
struct ExportFtArgs {
    /// Sample count; 10, 20, and 40 are the studied sizes.
    #[arg(long)]
    n: usize,
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(clap::Args)]
struct ReportArgs {
    /// Directory of eval outputs (reads every results*.jsonl under it).
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long = "mr-k", default_value_t = 30)]
    mr_k: usize,
    #[arg(long = "mr-seed", default_value_t = 0)]
    mr_seed: u64,
    /// Human MR override worksheet (adds an `understood` column).
    #[arg(long = "mr-overrides", value_name = "FILE")]
    mr_overrides: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };

    let config = match config::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };

    let outcome = match cli.command {
        Command::Kb(KbCommand::Validate { tables }) => commands::kb_validate(&tables),
        Command::Perturb(args) => commands::perturb(&args, &config),
        Command::Dataset(DatasetCommand::Build(args)) => {
            commands::dataset_build(&args, &config, cli.mock.as_deref())
        }
        Command::Dataset(DatasetCommand::AnnotateExport { out, file }) => {
            commands::annotate_export(&out, file.as_deref())
        }
        Command::Dataset(DatasetCommand::AnnotateImport { out, file }) => {
            commands::annotate_import(&out, &file)
        }
        Command::Eval(args) => commands::eval(&args, &config, cli.mock.as_deref()),
        Command::ExportFt(args) => commands::export_ft(&args, &config),
        Command::Report(args) => commands::report(&args),
    };

    match outcome {
        Ok(commands::Outcome::Success) => ExitCode::SUCCESS,
        Ok(commands::Outcome::ValidationFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
