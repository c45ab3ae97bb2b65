//! Syllabus text normalization and word-safe chunking.
//!
//! Chunk lengths and spans are measured in Unicode scalar values, not bytes.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

pub const DEFAULT_MAX_CHARS: usize = 200;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IngestError {
    #[error("syllabus text is empty after normalization")]
    EmptyAfterNormalization,
    #[error("syllabus bytes are not valid UTF-8: {0}")]
    InvalidUtf8(String),
    #[error("max_chars must be at least 1")]
    InvalidChunkSize,
}

/// A syllabus accepted for processing. `text` is already normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyllabusDocument {
    pub course_id: String,
    pub source_name: String,
    pub text: String,
    pub ingested_at: DateTime<Utc>,
}

impl SyllabusDocument {
    pub fn new(
        course_id: impl Into<String>,
        source_name: impl Into<String>,
        raw_text: &str,
    ) -> Result<Self, IngestError> {
        Ok(Self {
            course_id: course_id.into(),
            source_name: source_name.into(),
            text: normalize_text(raw_text)?,
            ingested_at: Utc::now(),
        })
    }

    pub fn chunks(&self, max_chars: usize) -> Result<Vec<DocumentChunk>, IngestError> {
        chunk_text(&self.text, max_chars)
    }
}

/// One retrieval unit. `char_span` is a half-open range of scalar-value offsets
/// into the normalized text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentChunk {
    pub chunk_id: usize,
    pub text: String,
    pub char_span: (usize, usize),
}

/// Turns raw bytes of some document format into plain text.
pub trait TextExtractor: Send + Sync {
    fn extract(&self, bytes: &[u8]) -> Result<String, IngestError>;
}

/// The only shipped extractor: UTF-8 plain text.
#[derive(Debug, Default, Clone, Copy)]
pub struct PlainTextExtractor;

impl TextExtractor for PlainTextExtractor {
    fn extract(&self, bytes: &[u8]) -> Result<String, IngestError> {
        std::str::from_utf8(bytes)
            .map(str::to_owned)
            .map_err(|e| IngestError::InvalidUtf8(e.to_string()))
    }
}

/// NFC, CRLF to LF, control characters dropped, whitespace runs collapsed to a
/// single space, trimmed.
pub fn normalize_text(raw: &str) -> Result<String, IngestError> {
    let nfc: String = raw.replace("\r\n", "\n").nfc().collect();
    let mut out = String::with_capacity(nfc.len());
    let mut pending_space = false;
    for c in nfc.chars() {
        if c.is_whitespace() {
            pending_space = true;
        } else if c.is_control() {
            continue;
        } else {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        }
    }
    if out.is_empty() {
        return Err(IngestError::EmptyAfterNormalization);
    }
    Ok(out)
}

struct Word<'a> {
    text: &'a str,
    start: usize,
    len: usize,
}

fn words(text: &str) -> Vec<Word<'_>> {
    let mut out = Vec::new();
    let mut start: Option<(usize, usize)> = None; // (byte, char)
    let mut char_pos = 0;
    for (byte_pos, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some((b, ch))) => {
                out.push(Word { text: &text[b..byte_pos], start: ch, len: char_pos - ch });
                start = None;
            }
            (false, None) => start = Some((byte_pos, char_pos)),
            _ => {}
        }
        char_pos += 1;
    }
    if let Some((b, ch)) = start {
        out.push(Word { text: &text[b..], start: ch, len: char_pos - ch });
    }
    out
}

#[derive(Default)]
struct Pending {
    text: String,
    start: usize,
    end: usize,
    len: usize,
}

impl Pending {
    fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn push(&mut self, text: &str, start: usize, len: usize) {
        if self.is_empty() {
            self.start = start;
        } else {
            self.text.push(' ');
            self.len += 1;
        }
        self.text.push_str(text);
        self.len += len;
        self.end = start + len;
    }

    fn flush(&mut self, out: &mut Vec<DocumentChunk>) {
        if self.is_empty() {
            return;
        }
        let done = std::mem::take(self);
        out.push(DocumentChunk {
            chunk_id: out.len(),
            text: done.text,
            char_span: (done.start, done.end),
        });
    }
}

/// Greedy left-to-right packing of whole words into chunks of at most
/// `max_chars` scalar values. A word longer than `max_chars` is hard-split at
/// `max_chars` boundaries; its remainder may share a chunk with following words.
pub fn chunk_text(text: &str, max_chars: usize) -> Result<Vec<DocumentChunk>, IngestError> {
    if max_chars == 0 {
        return Err(IngestError::InvalidChunkSize);
    }
    let mut out = Vec::new();
    let mut pending = Pending::default();
    for word in words(text) {
        if word.len > max_chars {
            pending.flush(&mut out);
            let chars: Vec<(usize, char)> = word.text.char_indices().collect();
            let mut offset = 0;
            while word.len - offset > max_chars {
                let piece_start = chars[offset].0;
                let piece_end = chars[offset + max_chars].0;
                pending.push(&word.text[piece_start..piece_end], word.start + offset, max_chars);
                pending.flush(&mut out);
                offset += max_chars;
            }
            if offset < word.len {
                let rest = &word.text[chars[offset].0..];
                pending.push(rest, word.start + offset, word.len - offset);
            }
            continue;
        }
        let needed = if pending.is_empty() { word.len } else { pending.len + 1 + word.len };
        if needed > max_chars {
            pending.flush(&mut out);
        }
        pending.push(word.text, word.start, word.len);
    }
    pending.flush(&mut out);
    Ok(out)
}
