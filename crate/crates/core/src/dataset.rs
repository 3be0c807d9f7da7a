//! Question records with gold answers, labeled sub-aspects and aligned sub-answers.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub sub_aspects: Vec<String>,
    pub sub_answers: Vec<String>,
    /// When set, `answer` must equal the in-order join of `sub_answers`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub answer_is_concatenation: bool,
}

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl DatasetRecord {
    /// Checks the hard invariants and returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let schema = |message: String| Error::Schema {
            record: self.id.clone(),
            message,
        };
        if self.id.trim().is_empty() {
            return Err(schema("empty id".into()));
        }
        if self.question.trim().is_empty() {
            return Err(schema("empty question".into()));
        }
        if self.sub_aspects.len() != self.sub_answers.len() {
            return Err(schema(format!(
                "{} sub-aspects but {} sub-answers",
                self.sub_aspects.len(),
                self.sub_answers.len()
            )));
        }
        if self.sub_aspects.is_empty() {
            return Err(schema("no sub-aspects".into()));
        }
        if self.sub_aspects.iter().any(|a| a.trim().is_empty()) {
            return Err(schema("blank sub-aspect".into()));
        }
        let mut warnings = Vec::new();
        if self.sub_aspects.len() < 2 {
            warnings.push(format!("record {} has a single sub-aspect", self.id));
        }
        if self.answer_is_concatenation {
            let joined = squash(&self.sub_answers.join(" "));
            if joined != squash(&self.answer) {
                warnings.push(format!(
                    "record {} answer differs from its joined sub-answers",
                    self.id
                ));
            }
        }
        Ok(warnings)
    }
}

/// Reads and validates a dataset file. Schema problems abort the load;
/// warnings are logged.
pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    let records: Vec<DatasetRecord> = jsonl::read(path)?;
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut seen = BTreeSet::new();
    for record in &records {
        for warning in record.validate()? {
            log::warn!("{warning}");
        }
        if !seen.insert(record.id.as_str()) {
            return Err(Error::Schema {
                record: record.id.clone(),
                message: "duplicate record id".into(),
            });
        }
    }
    Ok(records)
}
