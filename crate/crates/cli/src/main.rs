mod commands;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sharegate_core::runtime::{DEFAULT_STEP_CAP, DEFAULT_TEAMS};
use tracing_subscriber::filter::LevelFilter;

/// Parallel agent teams with a learned shared-memory admission gate.
#[derive(Parser, Debug)]
#[command(name = "sharegate", version, about)]
struct Cli {
    /// Log verbosity on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write simulator tasks as JSON lines.
    Generate(GenerateArgs),
    /// Run one admission variant and write traces and metrics.
    Run(RunArgs),
    /// Compare several variants on the same tasks and write a report.
    Eval(EvalArgs),
    /// Train an admission policy on simulator tasks.
    Train(TrainArgs),
    /// Recompute metrics from trace files and write tables and plot data.
    Report(ReportArgs),
}

/// Where simulator tasks come from: a task file or seeded generation.
#[derive(Args, Debug, Clone)]
struct SimTaskArgs {
    /// JSON-lines file of tasks written by `generate`.
    #[arg(long)]
    tasks: Option<PathBuf>,
    /// First generator seed.
    #[arg(long, default_value_t = 0)]
    seed_start: u64,
    /// Number of generated tasks.
    #[arg(long, default_value_t = 20)]
    count: u64,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 3)]
    width: usize,
    /// Facts every team needs.
    #[arg(long, default_value_t = 4)]
    overlap: usize,
    /// Wrong-value steps seeded into the task.
    #[arg(long, default_value_t = 4)]
    distractors: usize,
    /// Budgeted moves per team.
    #[arg(long, default_value_t = DEFAULT_STEP_CAP)]
    step_cap: usize,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    sim: SimTaskArgs,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum VariantArg {
    NoMemory,
    AlwaysNo,
    AddAll,
    LlmProxy,
    Learned,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum BackendArg {
    /// Scripted simulator teams.
    Sim,
    /// Chat-completions endpoint configured through the environment.
    Llm,
}

/// Options shared by `run` and `eval`.
#[derive(Args, Debug, Clone)]
struct ExecArgs {
    #[command(flatten)]
    sim: SimTaskArgs,
    #[arg(long, value_enum, default_value = "sim")]
    backend: BackendArg,
    /// JSON-lines file of `{task_id, query, scorer_id, step_cap?, reference?}` for the LLM backend.
    #[arg(long)]
    llm_tasks: Option<PathBuf>,
    /// Teams per episode.
    #[arg(short, long, default_value_t = DEFAULT_TEAMS)]
    k: usize,
    /// Run seeds; each task runs once per seed.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Policy checkpoint for the `learned` variant.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Hashing-embedding dimension.
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Embed with the endpoint's `/embeddings` route and this model.
    #[arg(long)]
    embedding_model: Option<String>,
    /// Leave step text out of trace files.
    #[arg(long)]
    no_content: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    exec: ExecArgs,
    #[arg(long, value_enum, default_value = "add-all")]
    variant: VariantArg,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    exec: ExecArgs,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "no-memory,always-no,llm-proxy,add-all"
    )]
    variants: Vec<VariantArg>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    sim: SimTaskArgs,
    /// TOML training configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `epochs` from the config.
    #[arg(long)]
    epochs: Option<usize>,
    /// Overrides the rollout `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Policy to continue from.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Controller width.
    #[arg(long, default_value_t = 16)]
    d_c: usize,
    /// Seed for fresh policy initialization.
    #[arg(long, default_value_t = 7)]
    init_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Trace directories or files; each becomes one variant row named after it.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            let first = message
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ");
            eprintln!(
                "{}",
                serde_json::json!({ "error": { "kind": "usage", "message": first } })
            );
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => LevelFilter::WARN,
        1 => LevelFilter::INFO,
        _ => LevelFilter::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();

    let result = match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Run(a) => commands::run(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Train(a) => commands::train(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::FAILURE
        }
    }
}

fn error_record(e: &anyhow::Error) -> serde_json::Value {
    let kind = e
        .chain()
        .find_map(|c| {
            if let Some(core) = c.downcast_ref::<sharegate_core::Error>() {
                Some(core.kind())
            } else if c.is::<std::io::Error>() {
                Some("io")
            } else if c.is::<serde_json::Error>() {
                Some("serde")
            } else {
                None
            }
        })
        .unwrap_or("cli");
    serde_json::json!({ "error": { "kind": kind, "message": format!("{e:#}") } })
}
