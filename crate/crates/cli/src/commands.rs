use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, ValueEnum};
use serde_json::Value;
use vta_core::eval::runs::{ingest_corpus_file, Rejection};
use vta_core::eval::{
    build_report, ingest_graded, load_corpus, output_name, render_baseline, render_report, run_phase1, run_phase2,
    Phase2Course, PublishedBaseline, ReportFormat, RunConfig, RunManifest, RunSummary,
};
use vta_core::ingest::{PlainTextExtractor, SyllabusDocument, TextExtractor};
use vta_core::knowledge::{generate_draft_model, parse_model_jsonl, publish, serialize_model_jsonl, DraftConfig};
use vta_core::qa::QaEngine;
use vta_service::store::SqliteStore;
use vta_service::AppState;

use crate::config::CliConfig;
use crate::Failure;

fn runtime<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> Failure {
    move |e| Failure::runtime(format!("{context}: {e}"))
}

fn read_syllabus(path: &Path) -> Result<String, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
    PlainTextExtractor.extract(&bytes).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "course".into())
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Writes to `out`, or standard output when absent or `-`.
fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(p) if p != Path::new("-") => {
            std::fs::write(p, bytes).map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))
        }
        _ => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes).and_then(|()| stdout.flush()).map_err(|e| Failure::runtime(e.to_string()))
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// UTF-8 syllabus text
    pub file: PathBuf,
    /// Output path for the chunks JSON (standard output if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// The chunks of a syllabus, as written by `vta ingest`.
pub fn chunks_json(text: &str, course: &str, source: &str, max_chars: usize) -> Result<Vec<u8>, String> {
    let doc = SyllabusDocument::new(course, source, text).map_err(|e| e.to_string())?;
    let chunks = doc.chunks(max_chars).map_err(|e| e.to_string())?;
    let mut out = serde_json::to_vec_pretty(&chunks).map_err(|e| e.to_string())?;
    out.push(b'\n');
    Ok(out)
}

pub fn ingest(cfg: &CliConfig, args: &IngestArgs) -> Result<(), Failure> {
    let text = read_syllabus(&args.file)?;
    let json = chunks_json(&text, &file_stem(&args.file), &file_name(&args.file), cfg.max_chars)
        .map_err(runtime(args.file.display()))?;
    emit(args.out.as_deref(), &json)
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// UTF-8 syllabus text
    pub file: PathBuf,
    /// Output path for the draft JSONL (standard output if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Course id recorded in the model (defaults to the file stem)
    #[arg(long)]
    pub course: Option<String>,
}

pub fn generate(cfg: &CliConfig, args: &GenerateArgs) -> Result<(), Failure> {
    let text = read_syllabus(&args.file)?;
    let bank = cfg.bank()?;
    let gateway = cfg.gateway(&bank)?;
    let course = args.course.clone().unwrap_or_else(|| file_stem(&args.file));
    let doc = SyllabusDocument::new(&course, file_name(&args.file), &text)
        .map_err(|e| Failure::runtime(format!("{}: {e}", args.file.display())))?;
    let chunks = doc.chunks(cfg.max_chars).map_err(|e| Failure::runtime(e.to_string()))?;
    let draft = generate_draft_model(&course, &chunks, &bank, &gateway, &DraftConfig { retrieval: cfg.qa().retrieval })
        .map_err(|e| Failure::runtime(e.to_string()))?;
    for f in &draft.failures {
        eprintln!("warning: `{}` is not-found because the gateway failed: {}", f.question, f.error);
    }
    emit(args.out.as_deref(), serialize_model_jsonl(&draft.model).as_bytes())
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen address; port 0 picks a free port
    #[arg(long)]
    pub bind: Option<String>,
    /// SQLite database path, or `:memory:`
    #[arg(long)]
    pub database: Option<String>,
}

pub fn serve(cfg: &CliConfig) -> Result<(), Failure> {
    let bank = Arc::new(cfg.bank()?);
    // built before the runtime starts: the http backend's client is blocking
    let gateway = cfg.gateway(&bank)?;
    let mut engine = QaEngine::new(gateway, Arc::clone(&bank), cfg.qa());
    if let Some(t) = cfg.templates()? {
        engine = engine.with_templates(t);
    }
    let admin = std::env::var(&cfg.server.admin_token_env).ok().filter(|t| !t.is_empty());
    let store = SqliteStore::open(&cfg.server.database).map_err(runtime(&cfg.server.database))?;
    let state = AppState::with_engine(Arc::new(store), engine, cfg.service(admin))
        .map_err(|e| Failure::runtime(e.to_string()))?;

    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::runtime(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&cfg.server.bind)
            .await
            .map_err(|e| Failure::runtime(format!("{}: {e}", cfg.server.bind)))?;
        let addr = listener.local_addr().map_err(|e| Failure::runtime(e.to_string()))?;
        println!("listening on http://{addr}");
        let _ = std::io::stdout().flush();
        tokio::select! {
            r = vta_service::serve(listener, state) => r.map_err(|e| Failure::runtime(e.to_string())),
            _ = tokio::signal::ctrl_c() => Ok(()),
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AskFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct AskArgs {
    pub course: String,
    pub question: String,
    /// Base URL of the service
    #[arg(long, env = "VTA_SERVER", default_value = "http://127.0.0.1:8080")]
    pub server: String,
    /// Bearer token
    #[arg(long, env = "VTA_TOKEN", hide_env_values = true)]
    pub token: String,
    /// Question language tag, or `auto`
    #[arg(long)]
    pub lang: Option<String>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: AskFormat,
}

pub fn ask(args: &AskArgs) -> Result<(), Failure> {
    let url = format!("{}/courses/{}/ask", args.server.trim_end_matches('/'), args.course);
    let body = serde_json::json!({ "question": args.question, "lang": args.lang });
    let resp = reqwest::blocking::Client::new()
        .post(&url)
        .bearer_auth(&args.token)
        .json(&body)
        .send()
        .map_err(|e| Failure::runtime(format!("{url}: {e}")))?;
    let status = resp.status();
    let value: Value = resp.json().map_err(|e| Failure::runtime(format!("{url}: {status}: {e}")))?;
    let degraded = status == reqwest::StatusCode::SERVICE_UNAVAILABLE && value.get("answer").is_some();
    if !status.is_success() && !degraded {
        let message = value.get("message").and_then(Value::as_str).unwrap_or("request failed");
        return Err(Failure::runtime(format!("{status}: {message}")));
    }
    if degraded {
        eprintln!("warning: the language model was unavailable; the answer may be incomplete");
    }
    let out = match args.format {
        AskFormat::Json => {
            let mut s = serde_json::to_string_pretty(&value).expect("value serializes");
            s.push('\n');
            s
        }
        AskFormat::Text => format!("{}\n", value.get("message").and_then(Value::as_str).unwrap_or_default()),
    };
    emit(None, out.as_bytes())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Evaluation phase
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub phase: Option<u8>,
    /// Directory of `*.txt` syllabi
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output directory for run files and the manifest
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Phase 2: directory of reviewed `<source>.phase1.jsonl` files
    #[arg(long)]
    pub corrected: Option<PathBuf>,
    /// Report on a directory of graded `*.jsonl` files instead of running
    #[arg(long, conflicts_with_all = ["corpus", "corrected", "baseline"])]
    pub graded: Option<PathBuf>,
    /// Print the published reference figures for `--phase`
    #[arg(long, conflicts_with_all = ["corpus", "corrected"])]
    pub baseline: bool,
    /// Worker threads; 0 uses every core
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output format: text, csv or json
    #[arg(long, default_value = "text")]
    pub format: String,
    /// Headline the with-partial accuracy in text reports
    #[arg(long)]
    pub include_partial: bool,
}

/// The run configuration `vta eval` uses. Every question is asked once, so
/// the answer cache is off.
pub fn run_config(cfg: &CliConfig, jobs: usize) -> RunConfig {
    let mut qa = cfg.qa();
    qa.cache_capacity = 0;
    RunConfig { max_chars: cfg.max_chars, qa, jobs }
}

pub fn eval(cfg: &CliConfig, args: &EvalArgs) -> Result<(), Failure> {
    let format: ReportFormat = args.format.parse().map_err(Failure::usage)?;
    if let Some(dir) = &args.graded {
        return report(cfg, dir, format, args.include_partial);
    }
    let phase = args.phase.ok_or_else(|| Failure::usage("--phase is required"))?;
    if args.baseline {
        let baseline = PublishedBaseline::bundled();
        let p = baseline.phase(phase).expect("phase is 1 or 2");
        let out = match format {
            ReportFormat::Json => serde_json::to_string_pretty(p).expect("baseline serializes") + "\n",
            _ => render_baseline(p),
        };
        return emit(None, out.as_bytes());
    }
    let corpus_dir = args.corpus.as_deref().ok_or_else(|| Failure::usage("--corpus is required"))?;
    let out_dir = args.out.as_deref().ok_or_else(|| Failure::usage("--out is required"))?;
    if phase == 2 && args.corrected.is_none() {
        return Err(Failure::usage("--phase 2 needs --corrected DIR"));
    }

    let corpus = load_corpus(corpus_dir).map_err(|e| Failure::runtime(e.to_string()))?;
    if corpus.is_empty() {
        return Err(Failure::runtime(format!("no syllabi found in {}", corpus_dir.display())));
    }
    let bank = Arc::new(cfg.bank()?);
    let gateway = cfg.gateway(&bank)?;
    let run = run_config(cfg, args.jobs);
    let summary = match &args.corrected {
        None => run_phase1(&corpus, &bank, &gateway, &run),
        Some(dir) => {
            let (courses, mut rejected) = phase2_courses(&corpus, dir, &bank, cfg.max_chars);
            run_phase2(&courses, &bank, &gateway, &run).map(|mut s| {
                rejected.append(&mut s.rejected);
                s.rejected = rejected;
                s
            })
        }
    }
    .map_err(|e| Failure::runtime(e.to_string()))?;

    write_run(out_dir, &summary, &RunManifest::new(&summary, &corpus, gateway.provenance()), format)
}

/// Loads and publishes each syllabus's corrected Phase-1 file.
pub fn phase2_courses(
    corpus: &[vta_core::eval::CorpusFile],
    corrected: &Path,
    bank: &vta_core::knowledge::QuestionBank,
    max_chars: usize,
) -> (Vec<Phase2Course>, Vec<Rejection>) {
    let mut courses = Vec::new();
    let mut rejected = Vec::new();
    for file in corpus {
        let reject = |reason: String| Rejection { source_name: file.source_name.clone(), reason };
        let path = corrected.join(output_name(&file.source_name, 1));
        let loaded = std::fs::read(&path)
            .map_err(|e| format!("{}: {e}", path.display()))
            .and_then(|bytes| parse_model_jsonl(&file.source_name, &bytes, bank).map_err(|e| format!("{}: {e}", path.display())))
            .and_then(|model| publish(&model, None).map_err(|e| format!("{}: {e}", path.display())))
            .and_then(|model| ingest_corpus_file(file, max_chars).map(|(_, chunks)| (model, chunks)));
        match loaded {
            Ok((model, chunks)) => courses.push(Phase2Course { source_name: file.source_name.clone(), model, chunks }),
            Err(reason) => rejected.push(reject(reason)),
        }
    }
    (courses, rejected)
}

fn write_run(out_dir: &Path, summary: &RunSummary, manifest: &RunManifest, format: ReportFormat) -> Result<(), Failure> {
    std::fs::create_dir_all(out_dir).map_err(|e| Failure::runtime(format!("{}: {e}", out_dir.display())))?;
    for o in &summary.outputs {
        let path = out_dir.join(&o.file_name);
        std::fs::write(&path, &o.jsonl).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
        if !o.failures.is_empty() {
            eprintln!("warning: {}: {} answers are not-found because the gateway failed", o.source_name, o.failures.len());
        }
    }
    let manifest_path = out_dir.join(format!("phase{}.manifest.json", summary.phase));
    let mut manifest_json = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    manifest_json.push(b'\n');
    std::fs::write(&manifest_path, &manifest_json)
        .map_err(|e| Failure::runtime(format!("{}: {e}", manifest_path.display())))?;
    for r in &summary.rejected {
        eprintln!("rejected {}: {}", r.source_name, r.reason);
    }

    match format {
        ReportFormat::Json => emit(None, &manifest_json)?,
        _ => {
            let line = format!(
                "phase {}: wrote {} files to {} ({} rejected)\n",
                summary.phase,
                summary.outputs.len(),
                out_dir.display(),
                summary.rejected.len()
            );
            emit(None, line.as_bytes())?;
        }
    }
    if summary.outputs.is_empty() {
        return Err(Failure::runtime("every syllabus was rejected"));
    }
    Ok(())
}

/// Graded files in `dir`: every `*.jsonl`, sorted by name.
pub fn graded_files(dir: &Path) -> Result<Vec<(String, String)>, String> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "jsonl") {
            let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            files.push((file_name(&path), text));
        }
    }
    files.sort();
    Ok(files)
}

fn report(cfg: &CliConfig, dir: &Path, format: ReportFormat, include_partial: bool) -> Result<(), Failure> {
    let files = graded_files(dir).map_err(Failure::runtime)?;
    if files.is_empty() {
        return Err(Failure::runtime(format!("no graded files found in {}", dir.display())));
    }
    let bank = cfg.bank()?;
    let records = ingest_graded(&files, &bank).map_err(|e| Failure::runtime(e.to_string()))?;
    let report = build_report(&records).map_err(|e| Failure::runtime(e.to_string()))?;
    let mut out = Vec::new();
    if format == ReportFormat::Text {
        let (accuracy, prf, label) = if include_partial {
            (report.overall.accuracy_with_partial, &report.prf_with_partial, "partial counted correct")
        } else {
            (report.overall.accuracy, &report.prf_without_partial, "partial counted incorrect")
        };
        let _ = writeln!(
            out,
            "Overall accuracy {:.1}% ({label}); precision {:.2}, recall {:.2}, f1 {:.2}\n",
            accuracy * 100.0,
            prf.precision,
            prf.recall,
            prf.f1
        );
    }
    out.extend(render_report(&report, format));
    emit(None, &out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConfigFormat {
    Toml,
    Json,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long, value_enum, default_value = "toml")]
    pub format: ConfigFormat,
}

pub fn show_config(cfg: &CliConfig, args: &ConfigArgs) -> Result<(), Failure> {
    let out = match args.format {
        ConfigFormat::Toml => toml::to_string_pretty(cfg).map_err(|e| Failure::runtime(e.to_string()))?,
        ConfigFormat::Json => serde_json::to_string_pretty(cfg).expect("config serializes") + "\n",
    };
    emit(None, out.as_bytes())
}
