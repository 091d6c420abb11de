//! The bundled fitness assistant: skill, task catalog, evaluation corpus,
//! golden transcript and autocorrect word list.

use crate::engine::{Engine, EngineError};
use crate::reformulation::TaskCatalog;
use crate::skill::{parse_skill, Skill};

pub const SKILL_JSON: &str = include_str!("../../../fixtures/fitness.json");
pub const TASKS_JSON: &str = include_str!("../../../fixtures/tasks.json");
pub const EVAL_TSV: &str = include_str!("../../../fixtures/eval.tsv");
pub const TRANSCRIPT: &str = include_str!("../../../fixtures/transcript.golden");
pub const WORDLIST_TSV: &str = include_str!("../../../fixtures/wordlist.tsv");

/// Reference time the golden transcript was recorded with.
pub const TRANSCRIPT_REFERENCE_TIME: &str = "2022-03-02T09:00:00";

pub fn skill() -> Skill {
    parse_skill(SKILL_JSON.as_bytes()).expect("bundled skill is valid")
}

pub fn engine() -> Result<Engine, EngineError> {
    Engine::new(skill())
}

pub fn catalog() -> TaskCatalog {
    TaskCatalog::from_json(TASKS_JSON).expect("bundled catalog is valid")
}
