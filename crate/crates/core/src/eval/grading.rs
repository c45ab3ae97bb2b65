//! Reading graded review files back in.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::knowledge::{parse_numbered_records, Category, Grade, QuestionBank, QaRecord, Verification};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradedRecord {
    /// Name of the file the record came from.
    pub source: String,
    pub question: String,
    pub answer: String,
    pub grade: Grade,
    pub category: Category,
}

/// Parses graded files given as `(name, contents)`. Every record must carry a
/// grade and a question from the bank.
pub fn ingest_graded(files: &[(String, String)], bank: &QuestionBank) -> Result<Vec<GradedRecord>, EvalError> {
    let mut out = Vec::new();
    for (name, contents) in files {
        let records = parse_numbered_records(contents)
            .map_err(|e| EvalError::Malformed { file: name.clone(), message: e.to_string() })?;
        for (line, QaRecord { question, answer, is_true }) in records {
            let grade = match is_true {
                Verification::Draft => return Err(EvalError::Ungraded { file: name.clone(), line }),
                v => v.grade().expect("graded"),
            };
            let category = bank
                .category_of(&question)
                .ok_or_else(|| EvalError::UnknownQuestion { file: name.clone(), line, question: question.clone() })?;
            out.push(GradedRecord { source: name.clone(), question, answer, grade, category });
        }
    }
    Ok(out)
}
