//! Deterministic, offline backend.
//!
//! Not a language model. Extraction resolves the question to a bank question
//! group by token overlap, then looks for that group's `Label:` patterns in the
//! supplied documents and answers with the labelled value. Ranking is
//! normalized query-token coverage. Translation is phrase substitution from a
//! bilingual fixture dictionary, and sentiment is a word lexicon. Good enough
//! for fixtures and CI; not for production syllabi.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::Deserialize;

use super::{
    order_ranking, Extraction, GatewayError, LanguageModelGateway, LanguageTag, Provenance, RankedDocument,
    Sentiment, SourceLanguage, Translation,
};
use crate::knowledge::QuestionBank;
use crate::text::{content_tokens, coverage, jaccard};
use crate::NOT_FOUND;

const BUNDLED_LABELS: &str = include_str!("../../data/label_lexicon.json");
const BUNDLED_DICTIONARY: &str = include_str!("../../data/translation_dictionary.json");
const BUNDLED_SENTIMENT: &str = include_str!("../../data/sentiment_lexicon.json");

pub const DEFAULT_MIN_CUE_SIMILARITY: f64 = 0.5;

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, GatewayError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&raw).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Deserialize)]
pub struct LabelRule {
    pub canonical: String,
    pub labels: Vec<String>,
}

/// Which `Label:` prefixes answer which canonical question.
#[derive(Debug, Clone, Deserialize)]
pub struct LabelLexicon {
    pub version: u32,
    pub rules: Vec<LabelRule>,
}

impl LabelLexicon {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED_LABELS).expect("bundled label lexicon is valid")
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        load_json(path)
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct SentimentLexicon {
    pub negative: Vec<String>,
    pub positive: Vec<String>,
}

impl SentimentLexicon {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED_SENTIMENT).expect("bundled sentiment lexicon is valid")
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        load_json(path)
    }

    pub fn classify(&self, text: &str) -> Sentiment {
        let words: Vec<String> = text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect();
        let hits = |list: &[String]| words.iter().filter(|w| list.contains(w)).count();
        let (neg, pos) = (hits(&self.negative), hits(&self.positive));
        match neg.cmp(&pos) {
            std::cmp::Ordering::Greater => Sentiment::Negative,
            std::cmp::Ordering::Less => Sentiment::Positive,
            std::cmp::Ordering::Equal => Sentiment::Neutral,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
struct DictionaryFile {
    #[allow(dead_code)]
    version: u32,
    markers: BTreeMap<String, Vec<String>>,
    phrases: BTreeMap<String, Vec<(String, String)>>,
}

/// Phrase pairs between English and each other language.
#[derive(Debug, Clone)]
pub struct Dictionary {
    markers: BTreeMap<LanguageTag, HashSet<String>>,
    // per language: (english, foreign)
    phrases: BTreeMap<LanguageTag, Vec<(String, String)>>,
}

impl Dictionary {
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_DICTIONARY).expect("bundled dictionary is valid")
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&raw)
    }

    pub fn from_json(raw: &str) -> Result<Self, GatewayError> {
        let file: DictionaryFile =
            serde_json::from_str(raw).map_err(|e| GatewayError::Config(format!("dictionary: {e}")))?;
        let mut phrases = BTreeMap::new();
        for (lang, pairs) in file.phrases {
            let mut en = HashSet::new();
            let mut xx = HashSet::new();
            for (e, x) in &pairs {
                if !en.insert(e.to_lowercase()) || !xx.insert(x.to_lowercase()) {
                    return Err(GatewayError::Config(format!(
                        "dictionary `{lang}` is not one-to-one at `{e}` / `{x}`"
                    )));
                }
            }
            phrases.insert(LanguageTag::new(&lang), pairs);
        }
        let markers = file
            .markers
            .into_iter()
            .map(|(lang, words)| (LanguageTag::new(&lang), words.into_iter().map(|w| w.to_lowercase()).collect()))
            .collect();
        Ok(Self { markers, phrases })
    }

    pub fn languages(&self) -> Vec<LanguageTag> {
        let mut langs: Vec<LanguageTag> = vec![LanguageTag::english()];
        langs.extend(self.phrases.keys().filter(|l| !l.is_english()).cloned());
        langs
    }

    fn supports(&self, lang: &LanguageTag) -> bool {
        lang.is_english() || self.phrases.contains_key(lang)
    }

    fn pairs(&self, from: &LanguageTag, to: &LanguageTag) -> Vec<(&str, &str)> {
        if from.is_english() {
            self.phrases[to].iter().map(|(e, x)| (e.as_str(), x.as_str())).collect()
        } else {
            self.phrases[from].iter().map(|(e, x)| (x.as_str(), e.as_str())).collect()
        }
    }

    pub fn detect(&self, text: &str) -> LanguageTag {
        let words: Vec<String> = text
            .split(|c: char| !c.is_alphanumeric() && c != '¿' && c != '\'')
            .flat_map(|w| {
                // "¿cuál" counts both the mark and the word
                let mut parts = Vec::new();
                let w = w.to_lowercase();
                if let Some(rest) = w.strip_prefix('¿') {
                    parts.push("¿".to_string());
                    parts.push(rest.to_string());
                } else {
                    parts.push(w);
                }
                parts
            })
            .filter(|w| !w.is_empty())
            .collect();
        let mut best = (LanguageTag::english(), 0usize);
        for lang in self.languages() {
            let markers = self.markers.get(&lang);
            let marker_hits = words.iter().filter(|w| markers.is_some_and(|m| m.contains(*w))).count();
            let phrase_hits = if lang.is_english() {
                self.phrases
                    .values()
                    .flat_map(|p| p.iter().map(|(e, _)| e.as_str()))
                    .filter(|p| contains_phrase(text, p))
                    .count()
            } else {
                self.phrases[&lang].iter().filter(|(_, x)| contains_phrase(text, x)).count()
            };
            let score = marker_hits + 3 * phrase_hits;
            if score > best.1 {
                best = (lang, score);
            }
        }
        best.0
    }

    pub fn translate(&self, text: &str, from: &SourceLanguage, to: &LanguageTag) -> Result<Translation, GatewayError> {
        if !self.supports(to) {
            return Err(GatewayError::UnsupportedLanguage(to.to_string()));
        }
        let from = match from {
            SourceLanguage::Auto => self.detect(text),
            SourceLanguage::Tag(t) if self.supports(t) => t.clone(),
            SourceLanguage::Tag(t) => return Err(GatewayError::UnsupportedLanguage(t.to_string())),
        };
        let text_out = if &from == to {
            text.to_string()
        } else if from.is_english() || to.is_english() {
            substitute(text, &self.pairs(&from, to))
        } else {
            let en = LanguageTag::english();
            substitute(&substitute(text, &self.pairs(&from, &en)), &self.pairs(&en, to))
        };
        Ok(Translation { text: text_out, detected_lang: from })
    }
}

fn lower_chars(s: &str) -> Vec<char> {
    s.chars().map(|c| c.to_lowercase().next().unwrap_or(c)).collect()
}

fn boundary_before(chars: &[char], i: usize) -> bool {
    i == 0 || !chars[i - 1].is_alphanumeric()
}

fn boundary_after(chars: &[char], end: usize, pattern: &[char]) -> bool {
    end == chars.len() || !chars[end].is_alphanumeric() || !pattern.last().is_some_and(|c| c.is_alphanumeric())
}

fn matches_at(lower: &[char], chars: &[char], i: usize, pattern: &[char]) -> bool {
    let end = i + pattern.len();
    end <= lower.len()
        && lower[i..end] == *pattern
        && (boundary_before(chars, i) || !pattern[0].is_alphanumeric())
        && boundary_after(chars, end, pattern)
}

fn contains_phrase(text: &str, phrase: &str) -> bool {
    let chars: Vec<char> = text.chars().collect();
    let lower = lower_chars(text);
    let pattern = lower_chars(phrase);
    !pattern.is_empty() && (0..chars.len()).any(|i| matches_at(&lower, &chars, i, &pattern))
}

/// Longest-match-first, left-to-right phrase substitution. Text outside any
/// phrase is copied unchanged.
fn substitute(text: &str, pairs: &[(&str, &str)]) -> String {
    let mut patterns: Vec<(Vec<char>, &str)> = pairs.iter().map(|(s, t)| (lower_chars(s), *t)).collect();
    patterns.sort_by(|a, b| b.0.len().cmp(&a.0.len()));
    let chars: Vec<char> = text.chars().collect();
    let lower = lower_chars(text);
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    'scan: while i < chars.len() {
        for (pattern, target) in &patterns {
            if !pattern.is_empty() && matches_at(&lower, &chars, i, pattern) {
                out.push_str(target);
                i += pattern.len();
                continue 'scan;
            }
        }
        out.push(chars[i]);
        i += 1;
    }
    out
}

struct LabelField {
    rule_labels: usize,
    label: String,
    value: String,
}

/// Every `Label:` occurrence in a document and the text up to the next label.
fn scan_fields(doc: &str, labels: &[(Vec<char>, usize)]) -> Vec<LabelField> {
    let chars: Vec<char> = doc.chars().collect();
    let lower = lower_chars(doc);
    let mut hits: Vec<(usize, usize, usize)> = Vec::new(); // (start, end, label index)
    let mut i = 0;
    'scan: while i < chars.len() {
        if boundary_before(&chars, i) && chars[i].is_alphanumeric() {
            for (pattern, idx) in labels {
                let end = i + pattern.len();
                if end < chars.len() && lower[i..end] == **pattern && chars[end] == ':' {
                    hits.push((i, end, *idx));
                    i = end + 1;
                    continue 'scan;
                }
            }
        }
        i += 1;
    }
    let mut fields = Vec::new();
    for (k, &(start, end, idx)) in hits.iter().enumerate() {
        let stop = hits.get(k + 1).map_or(chars.len(), |h| h.0);
        let value: String = chars[end + 1..stop].iter().collect();
        let value = value.trim().trim_end_matches(['.', ',', ';', ':', ' ']).trim();
        if value.is_empty() {
            continue;
        }
        fields.push(LabelField {
            rule_labels: idx,
            label: chars[start..end].iter().collect(),
            value: value.to_string(),
        });
    }
    fields
}

fn render_answer(label: &str, value: &str) -> String {
    let words: Vec<String> = label
        .split_whitespace()
        .map(|w| {
            let letters: Vec<char> = w.chars().filter(|c| c.is_alphabetic()).collect();
            if letters.len() > 1 && letters.iter().all(|c| c.is_uppercase()) {
                w.to_string()
            } else {
                w.to_lowercase()
            }
        })
        .collect();
    let last = words.last().map(|w| w.to_lowercase()).unwrap_or_default();
    let verb = if last.ends_with('s') && !last.ends_with("ss") { "are" } else { "is" };
    let end = if value.ends_with(['?', '!']) { "" } else { "." };
    format!("The {} {verb} {value}{end}", words.join(" "))
}

struct Cue {
    tokens: BTreeSet<String>,
    rule: usize,
}

pub struct ReferenceBackend {
    rules: Vec<LabelRule>,
    cues: Vec<Cue>,
    // lowercase label chars, index into `label_texts`; longest first
    labels: Vec<(Vec<char>, usize)>,
    label_texts: Vec<String>,
    dictionary: Dictionary,
    sentiment: SentimentLexicon,
    min_cue_similarity: f64,
}

impl ReferenceBackend {
    /// Bundled lexicons with cue phrasings taken from `bank`.
    pub fn bundled(bank: &QuestionBank) -> Self {
        Self::new(bank, LabelLexicon::bundled(), Dictionary::bundled(), SentimentLexicon::bundled())
    }

    pub fn new(bank: &QuestionBank, lexicon: LabelLexicon, dictionary: Dictionary, sentiment: SentimentLexicon) -> Self {
        let mut cues = Vec::new();
        let mut label_texts: Vec<String> = Vec::new();
        for (rule_idx, rule) in lexicon.rules.iter().enumerate() {
            match bank.lookup(&rule.canonical) {
                Some(group) => cues.extend(group.all_phrasings().map(|p| Cue { tokens: content_tokens(p), rule: rule_idx })),
                None => cues.push(Cue { tokens: content_tokens(&rule.canonical), rule: rule_idx }),
            }
            for label in &rule.labels {
                if !label_texts.iter().any(|l| l.eq_ignore_ascii_case(label)) {
                    label_texts.push(label.clone());
                }
            }
        }
        let mut labels: Vec<(Vec<char>, usize)> =
            label_texts.iter().enumerate().map(|(i, l)| (lower_chars(l), i)).collect();
        labels.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.1.cmp(&b.1)));
        Self {
            rules: lexicon.rules,
            cues,
            labels,
            label_texts,
            dictionary,
            sentiment,
            min_cue_similarity: DEFAULT_MIN_CUE_SIMILARITY,
        }
    }

    pub fn with_min_cue_similarity(mut self, threshold: f64) -> Self {
        self.min_cue_similarity = threshold;
        self
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    /// The rule whose cue phrasings best match `question`, with the similarity.
    fn resolve(&self, question: &str) -> Option<(&LabelRule, f64)> {
        let q = content_tokens(question);
        let mut best: Option<(usize, f64)> = None;
        for cue in &self.cues {
            let s = jaccard(&q, &cue.tokens);
            if best.map_or(true, |(_, b)| s > b) {
                best = Some((cue.rule, s));
            }
        }
        best.filter(|(_, s)| *s >= self.min_cue_similarity && *s > 0.0)
            .map(|(rule, s)| (&self.rules[rule], s))
    }

    fn not_found(&self, confidence: f64) -> Extraction {
        Extraction { answer: NOT_FOUND.into(), found: false, confidence, provenance: self.provenance() }
    }
}

impl LanguageModelGateway for ReferenceBackend {
    fn provenance(&self) -> Provenance {
        Provenance { backend: "reference".into(), model: "label-lexicon-v1".into() }
    }

    fn supported_languages(&self) -> Vec<LanguageTag> {
        self.dictionary.languages()
    }

    fn extract(&self, question: &str, documents: &[String]) -> Result<Extraction, GatewayError> {
        if question.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("empty question".into()));
        }
        if documents.is_empty() {
            return Err(GatewayError::InvalidRequest("no documents".into()));
        }
        let Some((rule, similarity)) = self.resolve(question) else {
            return Ok(self.not_found(0.0));
        };
        for doc in documents {
            for field in scan_fields(doc, &self.labels) {
                let label = &self.label_texts[field.rule_labels];
                if rule.labels.iter().any(|l| l.eq_ignore_ascii_case(label)) {
                    return Ok(Extraction {
                        answer: render_answer(&field.label, &field.value),
                        found: true,
                        confidence: similarity,
                        provenance: self.provenance(),
                    });
                }
            }
        }
        Ok(self.not_found(similarity))
    }

    fn rank(&self, query: &str, documents: &[String], k: usize) -> Result<Vec<RankedDocument>, GatewayError> {
        if k == 0 {
            return Err(GatewayError::InvalidRequest("k must be at least 1".into()));
        }
        let q = content_tokens(query);
        let ranked = documents
            .iter()
            .enumerate()
            .map(|(index, d)| RankedDocument { index, score: coverage(&q, &content_tokens(d)) })
            .collect();
        Ok(order_ranking(ranked, k))
    }

    fn translate(&self, text: &str, from: &SourceLanguage, to: &LanguageTag) -> Result<Translation, GatewayError> {
        self.dictionary.translate(text, from, to)
    }

    fn sentiment(&self, text: &str) -> Result<Sentiment, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("empty text".into()));
        }
        Ok(self.sentiment.classify(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn backend() -> ReferenceBackend {
        ReferenceBackend::bundled(&QuestionBank::bundled())
    }

    fn docs(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn extracts_labelled_value() {
        let gw = backend();
        let e = gw
            .extract("What is the course number?", &docs(&["Course Name: Introduction to Business. Course Number: BUS 100. Credit Hours: 3."]))
            .unwrap();
        assert!(e.found);
        assert_eq!(e.answer, "The course number is BUS 100.");
        assert_eq!(e.confidence, 1.0);

        let e = gw.extract("Where is the office of the instructor?", &docs(&["Office: 123 Hall"])).unwrap();
        assert!(e.found);
        assert!(e.answer.contains("123 Hall"), "{}", e.answer);
    }

    #[test]
    fn absent_information_is_not_found() {
        let gw = backend();
        let e = gw.extract("When is the final exam?", &docs(&["Grading: 40% exams, 60% homework."])).unwrap();
        assert!(!e.found);
        assert_eq!(e.answer, NOT_FOUND);
        let e = gw.extract("zzz qqq", &docs(&["Final Exam: May 3"])).unwrap();
        assert!(!e.found);
    }

    #[test]
    fn longest_label_wins() {
        let gw = backend();
        let d = docs(&["Office: 12 Main. Office Hours: Mon 2-3pm. TA Office: B5. TA Office Hours: Fri 9am."]);
        assert_eq!(gw.extract("Where is the office of the instructor?", &d).unwrap().answer, "The office is 12 Main.");
        assert_eq!(gw.extract("When are the instructor's office hours?", &d).unwrap().answer, "The office hours are Mon 2-3pm.");
        assert_eq!(gw.extract("Where is the office of the TA?", &d).unwrap().answer, "The TA office is B5.");
        assert_eq!(gw.extract("What are the TA's office hours?", &d).unwrap().answer, "The TA office hours are Fri 9am.");
    }

    #[test]
    fn extract_rejects_empty_inputs() {
        let gw = backend();
        assert!(gw.extract("", &docs(&["x"])).is_err());
        assert!(gw.extract("What is the course number?", &[]).is_err());
    }

    #[test]
    fn rank_examples() {
        let gw = backend();
        let r = gw.rank("office hours", &docs(&["Office Hours: Mon 2-3pm", "Grading: 40% exams"]), 2).unwrap();
        assert_eq!(r[0].index, 0);
        assert_eq!(r[0].score, 1.0);
        assert_eq!(r[1].score, 0.0);
        assert!(gw.rank("office", &[], 3).unwrap().is_empty());
        assert!(gw.rank("office", &docs(&["a"]), 0).is_err());
    }

    #[test]
    fn translation_examples() {
        let gw = backend();
        let en = LanguageTag::english();
        let same = gw.translate("hello", &SourceLanguage::Tag(en.clone()), &en).unwrap();
        assert_eq!(same.text, "hello");
        let t = gw.translate("¿Cuál es el nombre del curso?", &SourceLanguage::Auto, &en).unwrap();
        assert_eq!(t.detected_lang, LanguageTag::new("es"));
        assert_eq!(t.text, "What is the name of the course?");
        let err = gw.translate("hello", &SourceLanguage::Auto, &LanguageTag::new("xx")).unwrap_err();
        assert_eq!(err, GatewayError::UnsupportedLanguage("xx".into()));
        for lang in ["es", "fr", "de"] {
            assert!(gw.supported_languages().contains(&LanguageTag::new(lang)));
        }
    }

    #[test]
    fn answer_round_trips_through_dictionary() {
        let gw = backend();
        let es = LanguageTag::new("es");
        let en = LanguageTag::english();
        let answer = "The course number is BUS 100.";
        let out = gw.translate(answer, &SourceLanguage::Tag(en.clone()), &es).unwrap();
        assert_eq!(out.text, "El número del curso es BUS 100.");
        let back = gw.translate(&out.text, &SourceLanguage::Tag(es), &en).unwrap();
        assert_eq!(back.text, answer);
    }

    #[test]
    fn foreign_to_foreign_pivots_through_english() {
        let gw = backend();
        let t = gw
            .translate("¿Cuál es el número del curso?", &SourceLanguage::Auto, &LanguageTag::new("fr"))
            .unwrap();
        assert_eq!(t.text, "Quel est le numéro du cours ?");
    }

    #[test]
    fn sentiment_examples() {
        let gw = backend();
        assert_eq!(gw.sentiment("What is the course name?").unwrap(), Sentiment::Neutral);
        assert_eq!(gw.sentiment("I'm so stressed about the exam, when is it?").unwrap(), Sentiment::Negative);
        assert_eq!(gw.sentiment("I love this class! When is lab?").unwrap(), Sentiment::Positive);
        assert!(gw.sentiment("  ").is_err());
    }

    #[test]
    fn rendering_keeps_acronyms() {
        assert_eq!(render_answer("TA Name", "Kim"), "The TA name is Kim.");
        assert_eq!(render_answer("Class", "Room 4"), "The class is Room 4.");
        assert_eq!(render_answer("Credit Hours", "3"), "The credit hours are 3.");
    }

    #[test]
    fn dictionary_must_be_one_to_one() {
        let raw = r#"{"version":1,"markers":{},"phrases":{"es":[["a b","x"],["c d","x"]]}}"#;
        assert!(Dictionary::from_json(raw).is_err());
    }
}
