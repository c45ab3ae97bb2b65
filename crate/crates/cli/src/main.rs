//! `vta`: operator entry points for course assistants.
//!
//! Exit codes: 0 on success, 1 on a usage error, 2 on a runtime error.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Backend, CliConfig, Overrides};

#[derive(Debug, Parser)]
#[command(name = "vta", version, about = "Course assistant tooling: ingest, draft, serve, ask and evaluate")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML configuration file
    #[arg(long, global = true, env = "VTA_CONFIG")]
    config: Option<PathBuf>,
    /// Language-model backend
    #[arg(long, global = true, value_enum)]
    backend: Option<Backend>,
    /// Completion endpoint for the http backend
    #[arg(long, global = true)]
    lm_endpoint: Option<String>,
    /// Competency-question bank (JSONL)
    #[arg(long, global = true)]
    bank: Option<PathBuf>,
    /// Maximum characters per chunk
    #[arg(long, global = true)]
    max_chars: Option<usize>,
    /// Minimum question similarity to serve a knowledge-model entry
    #[arg(long, global = true)]
    tau_model: Option<f64>,
    /// Minimum extraction confidence
    #[arg(long, global = true)]
    tau_extract: Option<f64>,
    /// Chunks passed to extraction
    #[arg(long, global = true)]
    top_k: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize a syllabus and write its chunks as JSON
    Ingest(commands::IngestArgs),
    /// Draft a knowledge model and write the review-format JSONL
    Generate(commands::GenerateArgs),
    /// Run the HTTP service
    Serve(commands::ServeArgs),
    /// Ask a running service a question
    Ask(commands::AskArgs),
    /// Run an evaluation phase, or report on graded results
    Eval(commands::EvalArgs),
    /// Print the resolved configuration
    Config(commands::ConfigArgs),
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<config::ConfigError> for Failure {
    fn from(e: config::ConfigError) -> Self {
        Failure::runtime(e.to_string())
    }
}

fn resolve(global: &GlobalArgs, bind: Option<String>, database: Option<String>) -> Result<CliConfig, Failure> {
    let text = match &global.config {
        Some(path) => Some(
            std::fs::read_to_string(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?,
        ),
        None => None,
    };
    let flags = Overrides {
        backend: global.backend,
        endpoint: global.lm_endpoint.clone(),
        max_chars: global.max_chars,
        tau_model: global.tau_model,
        tau_extract: global.tau_extract,
        top_k: global.top_k,
        bank: global.bank.clone(),
        bind,
        database,
    };
    let file = global.config.as_deref().zip(text.as_deref());
    Ok(CliConfig::resolve(file, &|k| std::env::var(k).ok(), &flags)?)
}

fn init_logging(default: &str) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Serve(args) => {
            init_logging("info");
            let cfg = resolve(&cli.global, args.bind.clone(), args.database.clone())?;
            commands::serve(&cfg)
        }
        command => {
            init_logging("warn");
            let cfg = resolve(&cli.global, None, None)?;
            match command {
                Command::Ingest(args) => commands::ingest(&cfg, &args),
                Command::Generate(args) => commands::generate(&cfg, &args),
                Command::Ask(args) => commands::ask(&args),
                Command::Eval(args) => commands::eval(&cfg, &args),
                Command::Config(args) => commands::show_config(&cfg, &args),
                Command::Serve(_) => unreachable!("handled above"),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => {
                    let _ = e.print();
                    if !e.to_string().contains("Usage:") {
                        use clap::CommandFactory;
                        eprintln!("\n{}", Cli::command().render_usage());
                    }
                    ExitCode::from(1)
                }
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let _ = std::io::stdout().flush();
            eprintln!("vta: {}", f.message);
            if f.code == 1 {
                use clap::CommandFactory;
                eprintln!("\n{}", Cli::command().render_usage());
            }
            ExitCode::from(f.code)
        }
    }
}
