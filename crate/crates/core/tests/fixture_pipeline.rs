mod common;

use std::sync::Arc;

use chrono::{Duration as ChronoDuration, Utc};
use common::*;
use vta_core::gateway::{Capability, InstrumentedGateway, LanguageModelGateway, LanguageTag, Sentiment, SourceLanguage};
use vta_core::knowledge::{
    apply_review, publish, serialize_model_jsonl, Grade, KnowledgeEntry, KnowledgeModel, ModelHistory, Phase,
    ReviewEdit, SchemaElement, Verification, Category, PLACEHOLDER,
};
use vta_core::qa::{
    compose_response, export_finetune_dataset, parse_finetune_dataset, AnswerSource, ChatTurn, QaConfig, QaEngine,
    Question, Snapshot, SupportTemplates,
};
use vta_core::NOT_FOUND;

fn engine(config: QaConfig) -> QaEngine<InstrumentedGateway<vta_core::gateway::reference::ReferenceBackend>> {
    let bank = bank();
    QaEngine::new(InstrumentedGateway::new(reference(&bank)), bank, config)
}

fn published_bus100() -> (KnowledgeModel, Vec<vta_core::ingest::DocumentChunk>) {
    let (draft, chunks, _) = draft("BUS100", "bus100.txt");
    (reviewed_and_published(&draft), chunks)
}

#[test]
fn draft_has_one_placeholder_entry_per_phase1_question() {
    let (model, _, doc) = draft("BUS100", "bus100.txt");
    let bank = bank();
    let canon: Vec<&str> = bank.phase1().iter().map(|q| q.canonical.as_str()).collect();
    let asked: Vec<&str> = model.entries.iter().map(|e| e.question.as_str()).collect();
    assert_eq!(asked, canon);
    assert_eq!(model.entries.len(), 36);
    assert!(model.entries.iter().all(|e| e.verification == Verification::Draft));

    let course_number = model.entry("What is the course number?").unwrap();
    assert_eq!(course_number.answer, "The course number is BUS 100.");

    // every extracted value is literally in the syllabus
    for e in &model.entries {
        if let Some(value) = labelled_value(&e.answer) {
            assert!(doc.text.contains(value), "{} => {}", e.question, e.answer);
        }
    }

    let jsonl = serialize_model_jsonl(&model);
    let expected = format!(
        "{{\"QUESTION\":\"What is the course number?\",\"ANSWER\":\"The course number is BUS 100.\",\"isTrue\":\"{PLACEHOLDER}\"}}"
    );
    assert_eq!(jsonl.lines().nth(1).unwrap(), expected);
}

#[test]
fn draft_generation_is_deterministic() {
    let a = serialize_model_jsonl(&draft("BUS100", "bus100.txt").0);
    let b = serialize_model_jsonl(&draft("BUS100", "bus100.txt").0);
    assert_eq!(a, b);
}

#[test]
fn ta_less_syllabus_yields_not_found_for_ta_questions() {
    let (model, _, _) = draft("ACC210", "no_ta.txt");
    for e in model.entries.iter().filter(|e| e.element.category == Category::TAInformation) {
        assert_eq!(e.answer, NOT_FOUND, "{}", e.question);
    }
    assert_eq!(model.entry("What is the course number?").unwrap().answer, "The course number is ACC 210.");
}

#[test]
fn course_number_is_served_from_the_published_model() {
    let (model, chunks) = published_bus100();
    let eng = engine(QaConfig::default());
    let a = eng.answer_question(&Question::new("BUS100", "What is the course number?").unwrap(), &model, &chunks);
    assert!(a.found);
    assert_eq!(a.text, "The course number is BUS 100.");
    assert_eq!(a.source, AnswerSource::KnowledgeModel);
    assert_eq!(a.matched_element.unwrap().key, "Course Number");
    assert_eq!(a.model_version, 2);

    let name = eng.answer_question(&Question::new("BUS100", "What is the name of the course?").unwrap(), &model, &chunks);
    assert_eq!(name.text, "Introduction to Business");
}

#[test]
fn empty_model_and_no_chunks_is_not_found() {
    let eng = engine(QaConfig::default());
    let model = KnowledgeModel::new_draft("X", vec![]);
    let a = eng.answer_question(&Question::new("X", "What is the course number?").unwrap(), &model, &[]);
    assert!(!a.found);
    assert_eq!(a.text, NOT_FOUND);
    assert_eq!(a.source, AnswerSource::NotFound);
}

#[test]
fn every_phase2_variant_gets_its_canonical_answer() {
    let (model, chunks) = published_bus100();
    let eng = engine(QaConfig::default());
    let bank = bank();
    for bq in bank.question_set(Phase::Phase2) {
        let a = eng.answer_question(&Question::new("BUS100", bq.text).unwrap(), &model, &chunks);
        let canonical = model.entry(&bq.group.canonical).unwrap();
        assert_eq!(a.text, canonical.served_answer().unwrap(), "{}", bq.text);
        assert_eq!(a.matched_element.as_ref(), Some(&bq.group.element), "{}", bq.text);
    }
}

#[test]
fn match_entry_examples() {
    let (model, _) = published_bus100();
    let eng = engine(QaConfig::default());
    let (e, s) = eng.match_entry("What is the course number?", &model).unwrap();
    assert_eq!((e.question.as_str(), s), ("What is the course number?", 1.0));
    assert!(eng.match_entry("zzz qqq", &model).map_or(true, |(_, s)| s < 0.5));
    let a = eng.match_entry("When are the instructor's office hours?", &model).unwrap().0;
    let b = eng.match_entry("What are the instructor's office hours?", &model).unwrap().0;
    assert_eq!(a, b);
    assert_eq!(a.element, SchemaElement::new(Category::FacultyInformation, "Office Hours").unwrap());
}

#[test]
fn unanswerable_probe_is_exactly_not_found() {
    let (model, chunks) = published_bus100();
    let eng = engine(QaConfig::default());
    let a = eng.answer_question(&Question::new("BUS100", "What is the parking policy for the stadium?").unwrap(), &model, &chunks);
    assert_eq!(a.text, NOT_FOUND);
    assert!(!a.found);
    assert_eq!(a.message, NOT_FOUND);
}

#[test]
fn draft_entries_are_never_served() {
    let (draft, chunks, _) = draft("BUS100", "bus100.txt");
    let eng = engine(QaConfig::default());
    let a = eng.answer_question(&Question::new("BUS100", "What is the course number?").unwrap(), &draft, &chunks);
    // the chunk fallback may still answer, but never from the unreviewed entry
    assert_ne!(a.source, AnswerSource::KnowledgeModel);
}

#[test]
fn chunk_fallback_answers_questions_outside_the_model() {
    let (model, chunks) = published_bus100();
    let only_number = KnowledgeModel {
        entries: model.entries.iter().filter(|e| e.question == "What is the course number?").cloned().collect(),
        ..model.clone()
    };
    let eng = engine(QaConfig::default());
    let a = eng.answer_question(&Question::new("BUS100", "When is the final exam?").unwrap(), &only_number, &chunks);
    assert_eq!(a.source, AnswerSource::ChunkFallback);
    assert!(a.text.contains("December 10"), "{}", a.text);
}

#[test]
fn partial_entries_are_flagged() {
    let (model, chunks) = published_bus100();
    let edited = apply_review(&model, &[ReviewEdit::new("When are the exams?", Grade::Partial, None)]).unwrap();
    let v3 = publish(&edited, Some(model.version)).unwrap();
    let a = engine(QaConfig::default()).answer_question(&Question::new("BUS100", "When are the exams?").unwrap(), &v3, &chunks);
    assert!(a.partial_flag && a.found);
}

#[test]
fn spanish_question_gets_spanish_answer_through_english() {
    let (model, chunks) = published_bus100();
    let eng = engine(QaConfig::default());
    let direct = eng.answer_question(&Question::new("BUS100", "What is the course number?").unwrap(), &model, &chunks);
    let q = Question::new("BUS100", "¿Cuál es el número del curso?").unwrap().with_lang(SourceLanguage::Auto);
    let es = eng.answer_question(&q, &model, &chunks);
    assert_eq!(es.text, "El número del curso es BUS 100.");
    assert_eq!(es.lang, LanguageTag::new("es"));
    let back = eng
        .gateway()
        .translate(&es.text, &SourceLanguage::Tag(LanguageTag::new("es")), &LanguageTag::english())
        .unwrap();
    assert_eq!(back.text, direct.text);

    let probe = Question::new("BUS100", "¿Cuál es la política de estacionamiento del estadio?")
        .unwrap()
        .with_lang(SourceLanguage::Auto);
    let nf = eng.answer_question(&probe, &model, &chunks);
    assert!(!nf.found);
    assert_eq!(nf.text, "Respuesta no encontrada");
}

#[test]
fn unsupported_language_falls_back_to_english() {
    let (model, chunks) = published_bus100();
    let q = Question::new("BUS100", "What is the course number?").unwrap().with_lang(SourceLanguage::Tag(LanguageTag::new("xx")));
    let a = engine(QaConfig::default()).answer_question(&q, &model, &chunks);
    assert_eq!(a.text, "The course number is BUS 100.");
    assert_eq!(a.lang, LanguageTag::english());
    assert!(!a.degraded);
}

#[test]
fn no_fabrication_end_to_end() {
    let (model, chunks, doc) = {
        let (draft, chunks, doc) = draft("BUS100", "bus100.txt");
        (reviewed_and_published(&draft), chunks, doc)
    };
    let syllabus = word_set(&doc.text);
    let eng = engine(QaConfig::default());
    for bq in bank().question_set(Phase::Extraction) {
        let a = eng.answer_question(&Question::new("BUS100", bq.text).unwrap(), &model, &chunks);
        if a.found {
            let extra: Vec<String> = word_set(&a.text).difference(&syllabus).cloned().collect();
            assert!(extra.is_empty(), "{} => {} adds {extra:?}", bq.text, a.text);
        }
    }
}

#[test]
fn negative_sentiment_is_framed_supportively() {
    let (model, chunks) = published_bus100();
    let eng = engine(QaConfig::default());
    let q = Question::new("BUS100", "I'm so stressed about the exam, when is the final exam?").unwrap();
    let a = eng.answer_question(&q, &model, &chunks);
    assert_eq!(a.sentiment, Sentiment::Negative);
    let templates = SupportTemplates::bundled();
    assert!(templates.prefixes.iter().any(|p| a.message.starts_with(p.as_str())), "{}", a.message);
    assert!(a.message.contains(&a.text));
    assert!(a.message.contains("Counseling Center"), "{}", a.message);
}

#[test]
fn compose_examples() {
    let (model, chunks) = published_bus100();
    let eng = engine(QaConfig::default());
    let templates = SupportTemplates::bundled();
    let found = eng.answer_question(&Question::new("BUS100", "What is the course number?").unwrap(), &model, &chunks);
    assert_eq!(compose_response(&found, Sentiment::Neutral, &templates, None), found.text);
    assert_eq!(compose_response(&found, Sentiment::Positive, &templates, None), found.text);
    let neg = compose_response(&found, Sentiment::Negative, &templates, None);
    assert!(neg.starts_with(templates.prefix_for(&found.text)));
    assert!(neg.contains(&found.text));
    assert!(neg.contains(&templates.default_resources));

    let missing = eng.answer_question(&Question::new("BUS100", "zzz qqq").unwrap(), &model, &chunks);
    let neg = compose_response(&missing, Sentiment::Negative, &templates, None);
    assert!(neg.starts_with(templates.prefix_for(NOT_FOUND)));
    assert!(neg.contains(NOT_FOUND));
    assert!(neg.ends_with(&templates.contact_instructor));
}

#[test]
fn second_identical_question_makes_no_gateway_calls() {
    let (model, chunks) = published_bus100();
    let eng = engine(QaConfig::default());
    let snap = Snapshot::new(model, chunks);
    let q = Question::new("BUS100", "When is the final exam?").unwrap();
    let first = eng.cached_answer(&q, &snap);
    let calls = eng.gateway().total_calls();
    assert!(calls > 0);
    let second = eng.cached_answer(&Question::new("BUS100", "when is the FINAL exam").unwrap(), &snap);
    assert_eq!(eng.gateway().total_calls(), calls);
    assert!(first.same_as(&second));
}

#[test]
fn publish_changes_the_cache_key() {
    let (model, chunks) = published_bus100();
    let eng = engine(QaConfig::default());
    let q = Question::new("BUS100", "When is the final exam?").unwrap();
    let v2 = Snapshot::new(model.clone(), chunks.clone());
    eng.cached_answer(&q, &v2);

    let fixed = apply_review(&model, &[ReviewEdit::new("When is the final exam?", Grade::False, Some("The final exam is December 12."))]).unwrap();
    let mut history = ModelHistory::default();
    history.publish(&model).unwrap();
    let v3 = history.publish(&fixed).unwrap();
    let before = eng.gateway().calls(Capability::Sentiment);
    let a = eng.cached_answer(&q, &Snapshot { model: Arc::clone(&v3), chunks: Arc::new(chunks) });
    assert_eq!(eng.gateway().calls(Capability::Sentiment), before + 1);
    assert_eq!(a.text, "The final exam is December 12.");
    assert_eq!(a.model_version, v3.version);
}

#[test]
fn capacity_one_cache_alternating_always_misses() {
    let (model, chunks) = published_bus100();
    let eng = engine(QaConfig { cache_capacity: 1, ..QaConfig::default() });
    let snap = Snapshot::new(model, chunks);
    let a = Question::new("BUS100", "When is the final exam?").unwrap();
    let b = Question::new("BUS100", "What is the course number?").unwrap();
    for i in 0..6 {
        let before = eng.gateway().total_calls();
        eng.cached_answer(if i % 2 == 0 { &a } else { &b }, &snap);
        assert!(eng.gateway().total_calls() > before, "round {i} hit the cache");
    }
}

#[test]
fn cached_and_uncached_answers_agree() {
    let (model, chunks) = published_bus100();
    let cached = engine(QaConfig::default());
    let uncached = engine(QaConfig { cache_capacity: 0, ..QaConfig::default() });
    let snap = Snapshot::new(model, chunks);
    for round in 0..2 {
        for bq in bank().question_set(Phase::Phase2) {
            let q = Question::new("BUS100", bq.text).unwrap();
            let a = cached.cached_answer(&q, &snap);
            let b = uncached.cached_answer(&q, &snap);
            assert!(a.same_as(&b), "round {round}: {}", bq.text);
        }
    }
}

fn turn(id: u64, question: &str, text: &str, found: bool, minutes: i64) -> ChatTurn {
    let (model, chunks) = (KnowledgeModel::new_draft("C", vec![]), Vec::new());
    let mut answer = engine(QaConfig::default()).answer_question(&Question::new("C", question).unwrap(), &model, &chunks);
    answer.text = text.into();
    answer.found = found;
    let at = Utc::now() - ChronoDuration::minutes(100 - minutes);
    ChatTurn {
        turn_id: id,
        course_id: "C".into(),
        channel_id: "web".into(),
        question: question.into(),
        answer,
        asked_at: at,
        answered_at: at,
    }
}

#[test]
fn finetune_export() {
    let turns = vec![
        turn(1, "q1", "a1", true, 1),
        turn(2, "q2", NOT_FOUND, false, 2),
        turn(3, "q3", "a3", true, 3),
    ];
    let out = export_finetune_dataset(&turns, None);
    assert_eq!(out.lines().count(), 3);
    let records = parse_finetune_dataset(&out).unwrap();
    assert_eq!(records.iter().map(|r| r.question.as_str()).collect::<Vec<_>>(), ["q1", "q2", "q3"]);
    assert!(!records[1].found);
    let again: String = records.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    assert_eq!(again, out);

    assert_eq!(export_finetune_dataset(&turns, Some(Utc::now())), "");
    let since = turns[1].asked_at;
    assert_eq!(export_finetune_dataset(&turns, Some(since)).lines().count(), 2);
}

#[test]
fn not_found_entry_is_served_as_not_found() {
    let element = SchemaElement::new(Category::TAInformation, "Name").unwrap();
    let mut entry = KnowledgeEntry::draft("What is the name of the TA/Teaching Assistant?", NOT_FOUND, element);
    entry.verification = Verification::True;
    let model = publish(&KnowledgeModel::new_draft("ACC210", vec![entry]), None).unwrap();
    let a = engine(QaConfig::default()).answer_question(&Question::new("ACC210", "What is the name of the TA/Teaching Assistant?").unwrap(), &model, &[]);
    assert!(!a.found);
    assert_eq!(a.source, AnswerSource::NotFound);
    assert_eq!(a.text, NOT_FOUND);
}
