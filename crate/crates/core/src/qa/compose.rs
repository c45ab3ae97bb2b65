//! Sentiment-aware framing of the final message.

use std::path::Path;

use serde::Deserialize;

use super::Answer;
use crate::gateway::Sentiment;

const BUNDLED_TEMPLATES: &str = include_str!("../../data/support_templates.json");

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportTemplates {
    pub prefixes: Vec<String>,
    /// Must contain `{resources}`.
    pub support_pointer: String,
    pub default_resources: String,
    pub contact_instructor: String,
}

impl SupportTemplates {
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_TEMPLATES).expect("bundled support templates are valid")
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let raw = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&raw).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn from_json(raw: &str) -> Result<Self, String> {
        let t: Self = serde_json::from_str(raw).map_err(|e| e.to_string())?;
        if t.prefixes.is_empty() {
            return Err("at least one prefix is required".into());
        }
        if !t.support_pointer.contains("{resources}") {
            return Err("support_pointer must contain {resources}".into());
        }
        Ok(t)
    }

    /// Picks a prefix from the answer text so the same answer is always framed
    /// the same way.
    pub fn prefix_for(&self, text: &str) -> &str {
        let sum: usize = text.bytes().map(usize::from).sum();
        &self.prefixes[sum % self.prefixes.len()]
    }
}

/// The message shown to the student. `resources` is the course's mental
/// health resources answer, if it has one.
pub fn compose_response(
    answer: &Answer,
    sentiment: Sentiment,
    templates: &SupportTemplates,
    resources: Option<&str>,
) -> String {
    if sentiment != Sentiment::Negative {
        return answer.text.clone();
    }
    let prefix = templates.prefix_for(&answer.text);
    if answer.found {
        let pointer = templates
            .support_pointer
            .replace("{resources}", resources.unwrap_or(&templates.default_resources));
        format!("{prefix} {} {pointer}", answer.text)
    } else {
        format!("{prefix} {} {}", answer.text, templates.contact_instructor)
    }
}
