//! Core library for generating course-specific question-answering assistants
//! from syllabus documents.
//!
//! The crate is organised around the life of a course assistant:
//!
//! - [`ingest`] normalizes raw syllabus text and packs it into retrieval chunks.
//! - [`knowledge`] holds the syllabus schema, the competency-question bank, draft
//!   knowledge-model generation and the instructor review/publish workflow.
//! - [`gateway`] abstracts the language model behind a capability interface with a
//!   deterministic reference backend and a JSON-over-HTTP backend.
//! - [`qa`] is the two-tier answering engine (verified knowledge model first, chunk
//!   extraction second) with translation pivot, sentiment framing and caching.
//! - [`eval`] runs the two-phase evaluation and computes accuracy and
//!   precision/recall/F1 reports.

pub mod eval;
pub mod gateway;
pub mod ingest;
pub mod knowledge;
pub mod qa;
pub mod text;

/// The reserved answer emitted whenever no sufficiently confident answer exists.
pub const NOT_FOUND: &str = "Response not found";
