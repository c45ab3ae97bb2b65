//! The competency-question bank.
//!
//! File format: JSON Lines, one object per canonical question:
//!
//! ```json
//! {"category":"CourseInformation","element":"Course Number",
//!  "canonical":"What is the course number?",
//!  "phases":["PHASE1_36","PHASE2_70","EXTRACTION_120"],
//!  "variants":[{"text":"What is the course ID?","phases":["PHASE2_70","EXTRACTION_120"]}]}
//! ```
//!
//! `phases` on the canonical question says which question sets it belongs to;
//! each variant carries its own tags.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::schema::{Category, SchemaElement};
use crate::text::normalize_question;

const BUNDLED_BANK: &str = include_str!("../../data/question_bank.jsonl");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "PHASE1_36")]
    Phase1,
    #[serde(rename = "PHASE2_70")]
    Phase2,
    #[serde(rename = "EXTRACTION_120")]
    Extraction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub text: String,
    pub phases: BTreeSet<Phase>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompetencyQuestion {
    pub element: SchemaElement,
    pub canonical: String,
    pub variants: Vec<Variant>,
    pub phases: BTreeSet<Phase>,
}

impl CompetencyQuestion {
    /// Canonical text followed by the variants tagged with `phase`.
    pub fn phrasings(&self, phase: Phase) -> impl Iterator<Item = &str> {
        let canonical = self.phases.contains(&phase).then_some(self.canonical.as_str());
        canonical.into_iter().chain(
            self.variants
                .iter()
                .filter(move |v| v.phases.contains(&phase))
                .map(|v| v.text.as_str()),
        )
    }

    /// Canonical text and every variant regardless of tags.
    pub fn all_phrasings(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.canonical.as_str()).chain(self.variants.iter().map(|v| v.text.as_str()))
    }
}

/// One concrete question from a flattened question set.
#[derive(Debug, Clone, Copy)]
pub struct BankQuestion<'a> {
    pub text: &'a str,
    pub group: &'a CompetencyQuestion,
    pub group_index: usize,
    pub is_canonical: bool,
}

#[derive(Debug, Error)]
pub enum BankError {
    #[error("question bank line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("question bank: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BankLine {
    category: Category,
    element: String,
    canonical: String,
    phases: BTreeSet<Phase>,
    #[serde(default)]
    variants: Vec<Variant>,
}

#[derive(Debug, Clone)]
pub struct QuestionBank {
    questions: Vec<CompetencyQuestion>,
    index: HashMap<String, (usize, bool)>,
}

/// The bank shipped with the crate.
pub fn load_question_bank() -> QuestionBank {
    QuestionBank::bundled()
}

impl QuestionBank {
    pub fn bundled() -> Self {
        Self::from_jsonl(BUNDLED_BANK).expect("bundled question bank is valid")
    }

    pub fn load(path: &Path) -> Result<Self, BankError> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    pub fn from_jsonl(input: &str) -> Result<Self, BankError> {
        let mut questions = Vec::new();
        let mut index = HashMap::new();
        for (i, raw) in input.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let err = |message: String| BankError::Line { line, message };
            let parsed: BankLine = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
            let element = SchemaElement::new(parsed.category, &parsed.element).ok_or_else(|| {
                err(format!("`{}` is not an element of {}", parsed.element, parsed.category))
            })?;
            let canonical = parsed.canonical.trim().to_string();
            if canonical.is_empty() {
                return Err(err("canonical question is empty".into()));
            }
            let group_index = questions.len();
            let mut seen = vec![canonical.clone()];
            for v in &parsed.variants {
                if v.text.trim().is_empty() {
                    return Err(err("empty variant".into()));
                }
                if seen.contains(&v.text) {
                    return Err(err(format!("duplicate phrasing `{}`", v.text)));
                }
                seen.push(v.text.clone());
                if v.phases.contains(&Phase::Phase1) {
                    return Err(err(format!("variant `{}` cannot be tagged PHASE1_36", v.text)));
                }
            }
            for (k, text) in seen.iter().enumerate() {
                if index.insert(normalize_question(text), (group_index, k == 0)).is_some() {
                    return Err(err(format!("`{text}` already appears elsewhere in the bank")));
                }
            }
            questions.push(CompetencyQuestion {
                element,
                canonical,
                variants: parsed.variants,
                phases: parsed.phases,
            });
        }
        Ok(Self { questions, index })
    }

    pub fn groups(&self) -> &[CompetencyQuestion] {
        &self.questions
    }

    /// Every question tagged with `phase`, grouped canonical-first in bank order.
    pub fn question_set(&self, phase: Phase) -> Vec<BankQuestion<'_>> {
        self.questions
            .iter()
            .enumerate()
            .flat_map(|(group_index, group)| {
                group.phrasings(phase).map(move |text| BankQuestion {
                    text,
                    group,
                    group_index,
                    is_canonical: text == group.canonical,
                })
            })
            .collect()
    }

    /// The canonical questions asked during knowledge extraction.
    pub fn phase1(&self) -> Vec<&CompetencyQuestion> {
        self.questions.iter().filter(|q| q.phases.contains(&Phase::Phase1)).collect()
    }

    /// Finds the group a question belongs to, canonical or variant, ignoring case
    /// and punctuation.
    pub fn lookup(&self, text: &str) -> Option<&CompetencyQuestion> {
        self.index.get(&normalize_question(text)).map(|(i, _)| &self.questions[*i])
    }

    pub fn category_of(&self, text: &str) -> Option<Category> {
        self.lookup(text).map(|q| q.element.category)
    }
}
