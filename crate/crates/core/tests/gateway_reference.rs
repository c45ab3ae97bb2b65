mod common;

use std::collections::BTreeSet;

use common::*;
use proptest::prelude::*;
use vta_core::gateway::{LanguageModelGateway, LanguageTag, SourceLanguage};

/// Independent overlap score: distinct lowercase query words (minus a few
/// function words, with a trailing plural s dropped) found in the document.
fn brute_overlap(query: &str, doc: &str) -> f64 {
    const SKIP: &[&str] = &["the", "is", "are", "what", "when", "where", "of", "a", "for", "this"];
    let words = |s: &str| -> BTreeSet<String> {
        s.split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(|w| {
                let w = w.to_lowercase();
                if w.len() > 3 && w.ends_with('s') && !w.ends_with("ss") {
                    w[..w.len() - 1].to_string()
                } else {
                    w
                }
            })
            .filter(|w| !SKIP.contains(&w.as_str()))
            .collect()
    };
    let q = words(query);
    let d = words(doc);
    if q.is_empty() {
        0.0
    } else {
        q.iter().filter(|w| d.contains(*w)).count() as f64 / q.len() as f64
    }
}

#[test]
fn rank_matches_brute_force_overlap_on_five_documents() {
    let bank = bank();
    let gw = reference(&bank);
    let docs: Vec<String> = [
        "Grading: Homework 30%, quizzes 20%, midterm 20%, final 30%.",
        "Office Hours: Monday and Wednesday, 2:00pm to 3:30pm",
        "Final Exam: December 10 at 8:00am in Hudson Hall",
        "TA Office Hours: Friday, 9:00am to 11:00am in the TA office",
        "Textbook: Business Essentials, 12th edition",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for query in ["office hours", "final exam date", "textbook edition", "TA office hours", "grading homework final"] {
        let got: Vec<usize> = gw.rank(query, &docs, 5).unwrap().iter().map(|r| r.index).collect();
        let mut expected: Vec<(usize, f64)> = docs.iter().enumerate().map(|(i, d)| (i, brute_overlap(query, d))).collect();
        expected.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        assert_eq!(got, expected.iter().map(|e| e.0).collect::<Vec<_>>(), "{query}");
    }
}

#[test]
fn rank_respects_k_and_empty_input() {
    let bank = bank();
    let gw = reference(&bank);
    let docs: Vec<String> = (0..10).map(|i| format!("doc {i} office")).collect();
    let r = gw.rank("office", &docs, 3).unwrap();
    assert_eq!(r.iter().map(|r| r.index).collect::<Vec<_>>(), [0, 1, 2]);
    assert!(gw.rank("office", &[], 3).unwrap().is_empty());
}

#[test]
fn capabilities_are_pure() {
    let bank = bank();
    let gw = reference(&bank);
    let docs = vec![fixture("bus100.txt")];
    for _ in 0..3 {
        assert_eq!(gw.extract("When is the final exam?", &docs).unwrap(), reference(&bank).extract("When is the final exam?", &docs).unwrap());
        assert_eq!(gw.rank("final exam", &docs, 1).unwrap(), reference(&bank).rank("final exam", &docs, 1).unwrap());
        assert_eq!(
            gw.translate("¿Cuándo es el examen final?", &SourceLanguage::Auto, &LanguageTag::english()).unwrap().text,
            "When is the final exam?"
        );
        assert_eq!(gw.sentiment("I hate exams").unwrap(), reference(&bank).sentiment("I hate exams").unwrap());
    }
}

#[test]
fn detects_each_fixture_language() {
    let bank = bank();
    let gw = reference(&bank);
    for (text, lang) in [
        ("What is the course number?", "en"),
        ("¿Cuál es el número del curso?", "es"),
        ("Quel est le numéro du cours ?", "fr"),
        ("Wie lautet die Kursnummer?", "de"),
    ] {
        let t = gw.translate(text, &SourceLanguage::Auto, &LanguageTag::english()).unwrap();
        assert_eq!(t.detected_lang.as_str(), lang, "{text}");
        assert_eq!(t.text, "What is the course number?");
    }
}

fn word() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("office".to_string()),
        Just("hours".to_string()),
        Just("exam".to_string()),
        Just("final".to_string()),
        Just("grading".to_string()),
        Just("room".to_string()),
        "[a-z]{3,8}",
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn adding_a_query_term_present_in_the_document_never_lowers_its_score(
        query in prop::collection::vec(word(), 1..6),
        doc in prop::collection::vec(word(), 1..20),
        pick in any::<prop::sample::Index>(),
    ) {
        let bank = bank();
        let gw = reference(&bank);
        let docs = vec![doc.join(" ")];
        let term = pick.get(&doc).clone();
        let before = gw.rank(&query.join(" "), &docs, 1).unwrap()[0].score;
        let after = gw.rank(&format!("{} {term}", query.join(" ")), &docs, 1).unwrap()[0].score;
        prop_assert!(after >= before, "{before} -> {after}");
        prop_assert!((0.0..=1.0).contains(&after));
    }

    #[test]
    fn extraction_never_adds_words(
        labels in prop::collection::vec(prop::sample::select(vec![
            "Office", "Office Hours", "Final Exam", "Grading", "Textbook", "TA Name", "Course Number", "Email", "Notes",
        ]), 1..6),
        values in prop::collection::vec("[A-Za-z0-9 ,]{1,30}", 6),
        question in prop::sample::select(vec![
            "When is the final exam?", "Where is the office of the instructor?", "What textbook does this course use?",
            "What is the course number?", "When are the instructor's office hours?", "How can I contact the instructor?",
        ]),
    ) {
        let bank = bank();
        let gw = reference(&bank);
        let doc: String = labels.iter().zip(&values).map(|(l, v)| format!("{l}: {v}. ")).collect();
        let e = gw.extract(question, &[doc.clone()]).unwrap();
        if e.found {
            let extra: Vec<String> = word_set(&e.answer).difference(&word_set(&doc)).cloned().collect();
            prop_assert!(extra.is_empty(), "{} adds {:?}", e.answer, extra);
        } else {
            prop_assert_eq!(e.answer, vta_core::NOT_FOUND);
        }
    }
}
