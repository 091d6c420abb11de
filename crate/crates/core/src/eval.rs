//! Intent accuracy over a labeled corpus of `text<TAB>intent` lines, with
//! `__oos__` marking utterances that should resolve out of scope.

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDateTime;
use serde::Serialize;
use thiserror::Error;

use crate::engine::Engine;

pub const OOS_LABEL: &str = "__oos__";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("line {0}: expected text<TAB>intent")]
    Format(usize),
    #[error("line {line}: unknown intent '{intent}'")]
    UnknownIntent { line: usize, intent: String },
    #[error("line {line}: {message}")]
    Text { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledUtterance {
    pub text: String,
    pub label: String,
}

pub fn parse_corpus(text: &str) -> Result<Vec<LabeledUtterance>, CorpusError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (text, label) = line.split_once('\t').ok_or(CorpusError::Format(n + 1))?;
        let label = label.trim();
        if text.trim().is_empty() || label.is_empty() {
            return Err(CorpusError::Format(n + 1));
        }
        out.push(LabeledUtterance {
            text: text.to_string(),
            label: label.to_string(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// expected label -> predicted label -> count
    pub confusion: BTreeMap<String, BTreeMap<String, usize>>,
    /// Utterances predicted out of scope.
    pub oos_count: usize,
}

pub fn evaluate(
    engine: &Engine,
    corpus: &[LabeledUtterance],
    reference: NaiveDateTime,
) -> Result<EvalReport, CorpusError> {
    let mut confusion: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut correct = 0;
    let mut oos_count = 0;
    for (n, item) in corpus.iter().enumerate() {
        if item.label != OOS_LABEL && engine.skill().intent(&item.label).is_none() {
            return Err(CorpusError::UnknownIntent {
                line: n + 1,
                intent: item.label.clone(),
            });
        }
        let nlu = engine
            .analyze(&item.text, reference)
            .map_err(|e| CorpusError::Text {
                line: n + 1,
                message: e.to_string(),
            })?;
        let predicted = nlu
            .resolution
            .verdict
            .intent()
            .unwrap_or(OOS_LABEL)
            .to_string();
        if predicted == OOS_LABEL {
            oos_count += 1;
        }
        if predicted == item.label {
            correct += 1;
        }
        *confusion
            .entry(item.label.clone())
            .or_default()
            .entry(predicted)
            .or_default() += 1;
    }
    let total = corpus.len();
    Ok(EvalReport {
        total,
        correct,
        accuracy: if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        },
        confusion,
        oos_count,
    })
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "total: {}", self.total)?;
        writeln!(f, "correct: {}", self.correct)?;
        writeln!(f, "accuracy: {:.4}", self.accuracy)?;
        writeln!(f, "predicted out of scope: {}", self.oos_count)?;
        writeln!(f, "confusion (expected -> predicted):")?;
        for (expected, row) in &self.confusion {
            let cells: Vec<String> = row.iter().map(|(p, c)| format!("{p}={c}")).collect();
            writeln!(f, "  {expected}: {}", cells.join(" "))?;
        }
        Ok(())
    }
}
