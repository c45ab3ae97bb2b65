//! The two evaluation runs over a syllabus corpus.

use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EvalError;
use crate::gateway::{LanguageModelGateway, Provenance};
use crate::ingest::{DocumentChunk, SyllabusDocument, DEFAULT_MAX_CHARS};
use crate::knowledge::{
    generate_draft_model, serialize_records, DraftConfig, KnowledgeModel, ModelStatus, Phase, QaRecord, QuestionBank,
    Verification,
};
use crate::qa::{QaConfig, QaEngine, Question};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusFile {
    pub source_name: String,
    pub text: String,
}

/// Every `*.txt` file in `dir`, sorted by name. Source names drop the extension.
pub fn load_corpus(dir: &Path) -> Result<Vec<CorpusFile>, EvalError> {
    let io = |e: std::io::Error| EvalError::Io(format!("{}: {e}", dir.display()));
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "txt") {
            let bytes = std::fs::read(&path).map_err(io)?;
            let source_name = path.file_stem().expect("file has a name").to_string_lossy().into_owned();
            // undecodable files are kept and rejected by ingest with a reason
            let text = String::from_utf8(bytes).unwrap_or_default();
            files.push(CorpusFile { source_name, text });
        }
    }
    files.sort_by(|a, b| a.source_name.cmp(&b.source_name));
    Ok(files)
}

pub fn output_name(source_name: &str, phase: u8) -> String {
    format!("{source_name}.phase{phase}.jsonl")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub max_chars: usize,
    pub qa: QaConfig,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { max_chars: DEFAULT_MAX_CHARS, qa: QaConfig { cache_capacity: 0, ..QaConfig::default() }, jobs: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutput {
    pub source_name: String,
    pub file_name: String,
    pub jsonl: String,
    /// Questions whose answers are not-found because the gateway failed.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub source_name: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub phase: u8,
    pub outputs: Vec<RunOutput>,
    pub rejected: Vec<Rejection>,
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, EvalError> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| EvalError::Io(e.to_string()))
}

pub fn ingest_corpus_file(file: &CorpusFile, max_chars: usize) -> Result<(SyllabusDocument, Vec<DocumentChunk>), String> {
    let doc = SyllabusDocument::new(&file.source_name, &file.source_name, &file.text).map_err(|e| e.to_string())?;
    let chunks = doc.chunks(max_chars).map_err(|e| e.to_string())?;
    Ok((doc, chunks))
}

/// Drafts a 36-question review template for every syllabus.
pub fn run_phase1<G: LanguageModelGateway + Sync>(
    corpus: &[CorpusFile],
    bank: &QuestionBank,
    gateway: &G,
    config: &RunConfig,
) -> Result<RunSummary, EvalError> {
    let draft_cfg = DraftConfig { retrieval: config.qa.retrieval };
    let results: Vec<Result<RunOutput, Rejection>> = pool(config.jobs)?.install(|| {
        corpus
            .par_iter()
            .map(|file| {
                let reject = |reason: String| Rejection { source_name: file.source_name.clone(), reason };
                let (doc, chunks) = ingest_corpus_file(file, config.max_chars).map_err(reject)?;
                let draft = generate_draft_model(&doc.course_id, &chunks, bank, gateway, &draft_cfg)
                    .map_err(|e| reject(e.to_string()))?;
                Ok(RunOutput {
                    source_name: file.source_name.clone(),
                    file_name: output_name(&file.source_name, 1),
                    jsonl: crate::knowledge::serialize_model_jsonl(&draft.model),
                    failures: draft.failures.into_iter().map(|f| f.question).collect(),
                })
            })
            .collect()
    });
    Ok(split(1, results))
}

fn split(phase: u8, results: Vec<Result<RunOutput, Rejection>>) -> RunSummary {
    let mut summary = RunSummary { phase, outputs: Vec::new(), rejected: Vec::new() };
    for r in results {
        match r {
            Ok(o) => summary.outputs.push(o),
            Err(rej) => summary.rejected.push(rej),
        }
    }
    summary
}

/// A course ready for Phase 2: its published corrected model and chunks.
#[derive(Debug, Clone)]
pub struct Phase2Course {
    pub source_name: String,
    pub model: KnowledgeModel,
    pub chunks: Vec<DocumentChunk>,
}

/// Asks every Phase-2 question of every course and writes ungraded results.
pub fn run_phase2<G: LanguageModelGateway + Sync>(
    courses: &[Phase2Course],
    bank: &Arc<QuestionBank>,
    gateway: &G,
    config: &RunConfig,
) -> Result<RunSummary, EvalError> {
    let questions = bank.question_set(Phase::Phase2);
    let engine = QaEngine::new(gateway, Arc::clone(bank), config.qa);
    let results: Vec<Result<RunOutput, Rejection>> = pool(config.jobs)?.install(|| {
        courses
            .par_iter()
            .map(|course| {
                if course.model.status != ModelStatus::Published {
                    return Err(Rejection {
                        source_name: course.source_name.clone(),
                        reason: "model is not published".into(),
                    });
                }
                let mut records = Vec::with_capacity(questions.len());
                let mut failures = Vec::new();
                for bq in &questions {
                    let q = Question::new(&course.model.course_id, bq.text).expect("bank questions are non-empty");
                    let answer = engine.answer_question(&q, &course.model, &course.chunks);
                    if answer.degraded {
                        failures.push(bq.text.to_string());
                    }
                    records.push(QaRecord::new(bq.text, answer.text, Verification::Draft));
                }
                Ok(RunOutput {
                    source_name: course.source_name.clone(),
                    file_name: output_name(&course.source_name, 2),
                    jsonl: serialize_records(&records),
                    failures,
                })
            })
            .collect()
    });
    Ok(split(2, results))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub source_name: String,
    pub input_sha256: String,
    pub output: String,
    pub output_sha256: String,
}

/// Reproducibility record written next to run outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub phase: u8,
    pub generated_at: DateTime<Utc>,
    pub backend: Provenance,
    pub files: Vec<ManifestEntry>,
    pub rejected: Vec<Rejection>,
}

impl RunManifest {
    pub fn new(summary: &RunSummary, corpus: &[CorpusFile], backend: Provenance) -> Self {
        let files = summary
            .outputs
            .iter()
            .map(|o| ManifestEntry {
                source_name: o.source_name.clone(),
                input_sha256: corpus
                    .iter()
                    .find(|c| c.source_name == o.source_name)
                    .map(|c| sha256_hex(c.text.as_bytes()))
                    .unwrap_or_default(),
                output: o.file_name.clone(),
                output_sha256: sha256_hex(o.jsonl.as_bytes()),
            })
            .collect();
        Self { phase: summary.phase, generated_at: Utc::now(), backend, files, rejected: summary.rejected.clone() }
    }
}

/// Grades results by exact match against gold answers, for fixtures and CI
/// only. `gold` maps a question to its expected answer.
pub fn auto_grade(results: &[QaRecord], gold: impl Fn(&str) -> Option<String>) -> Vec<QaRecord> {
    results
        .iter()
        .map(|r| {
            let grade = match gold(&r.question) {
                Some(expected) if expected == r.answer => Verification::True,
                _ => Verification::False,
            };
            QaRecord::new(r.question.clone(), r.answer.clone(), grade)
        })
        .collect()
}
