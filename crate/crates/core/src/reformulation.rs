//! Contextual query reformulation.
//!
//! A [`TaskCatalog`] lists tasks and their ordered states, each state a bag of
//! weighted terms. The user's current task state is detected from the query,
//! the query is expanded with terms tied to both that state and the user's
//! [`UserProfile`], and the expansion is then refined (stopwords, repeats and
//! weakly-tied terms removed).

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::skill::SkillConfig;

/// Expansion terms with a task weight below this are out of context.
pub const OUT_OF_CONTEXT_THRESHOLD: f64 = 0.1;
const PROFILE_RETAIN: f64 = 0.9;
const PROFILE_GAIN: f64 = 0.1;
const PROFILE_DECAY: f64 = 0.99;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("catalog has no tasks")]
    Empty,
    #[error("duplicate task id '{0}'")]
    DuplicateTask(String),
    #[error("task '{0}' has no states")]
    NoStates(String),
    #[error("task '{task}' state {state}: weight {weight} for '{term}' is outside (0, 1]")]
    BadWeight {
        task: String,
        state: usize,
        term: String,
        weight: f64,
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReformulationError {
    #[error("query has no terms after stopword removal")]
    EmptyQuery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskState {
    pub label: String,
    pub terms: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDef {
    pub id: String,
    pub states: Vec<TaskState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskCatalog {
    pub tasks: Vec<TaskDef>,
}

impl TaskCatalog {
    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        let catalog: TaskCatalog = serde_json::from_str(text)?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        if self.tasks.is_empty() {
            return Err(CatalogError::Empty);
        }
        let mut ids = HashSet::new();
        for task in &self.tasks {
            if !ids.insert(task.id.as_str()) {
                return Err(CatalogError::DuplicateTask(task.id.clone()));
            }
            if task.states.is_empty() {
                return Err(CatalogError::NoStates(task.id.clone()));
            }
            for (i, state) in task.states.iter().enumerate() {
                for (term, &weight) in &state.terms {
                    if !(weight > 0.0 && weight <= 1.0) {
                        return Err(CatalogError::BadWeight {
                            task: task.id.clone(),
                            state: i,
                            term: term.clone(),
                            weight,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn task(&self, id: &str) -> Option<&TaskDef> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn state(&self, pointer: &TaskPointer) -> Option<&TaskState> {
        self.task(&pointer.task_id)?.states.get(pointer.state_index)
    }
}

/// A task and one of its states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPointer {
    pub task_id: String,
    pub state_index: usize,
}

impl TaskPointer {
    pub fn new(task_id: impl Into<String>, state_index: usize) -> Self {
        TaskPointer {
            task_id: task_id.into(),
            state_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskDetection {
    pub pointer: TaskPointer,
    pub score: f64,
}

/// Best (task, state) by summed term weight. Ties go to the smaller task id,
/// then the lower state; a zero score falls back to the first task's first
/// state.
pub fn detect_task(query_terms: &[String], catalog: &TaskCatalog) -> TaskDetection {
    let mut best: Option<(f64, &str, usize)> = None;
    for task in &catalog.tasks {
        for (i, state) in task.states.iter().enumerate() {
            let score: f64 = query_terms.iter().filter_map(|t| state.terms.get(t)).sum();
            let better = match best {
                None => true,
                Some((s, id, idx)) => {
                    score > s || (score == s && (task.id.as_str(), i) < (id, idx))
                }
            };
            if better {
                best = Some((score, &task.id, i));
            }
        }
    }
    match best {
        Some((score, id, i)) if score > 0.0 => TaskDetection {
            pointer: TaskPointer::new(id, i),
            score,
        },
        _ => TaskDetection {
            pointer: TaskPointer::new(catalog.tasks[0].id.clone(), 0),
            score: 0.0,
        },
    }
}

/// Within a task the state only moves forward; a different task replaces it.
pub fn advance_task_state(current: &TaskPointer, detected: &TaskPointer) -> TaskPointer {
    if current.task_id == detected.task_id && detected.state_index < current.state_index {
        current.clone()
    } else {
        detected.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct UserProfile {
    pub user_id: String,
    pub term_weights: BTreeMap<String, f64>,
    pub observation_count: u64,
}

impl UserProfile {
    pub fn new(user_id: impl Into<String>) -> Self {
        UserProfile {
            user_id: user_id.into(),
            ..Default::default()
        }
    }

    pub fn weight(&self, term: &str) -> f64 {
        self.term_weights.get(term).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateTerm {
    pub term: String,
    pub task_weight: f64,
    pub profile_weight: f64,
    pub score: f64,
}

/// Complete candidates (positive task and profile weight) from the state's
/// vocabulary, best product first, ties lexicographic. Query terms and
/// stopwords never qualify.
pub fn score_candidate_terms(
    query_terms: &[String],
    state: &TaskState,
    profile: &UserProfile,
    stopwords: &HashSet<String>,
) -> Vec<CandidateTerm> {
    let mut out: Vec<CandidateTerm> = state
        .terms
        .iter()
        .filter(|(term, _)| !query_terms.contains(term) && !stopwords.contains(*term))
        .map(|(term, &task_weight)| {
            let profile_weight = profile.weight(term);
            CandidateTerm {
                term: term.clone(),
                task_weight,
                profile_weight,
                score: task_weight * profile_weight,
            }
        })
        .filter(|c| c.task_weight > 0.0 && c.profile_weight > 0.0)
        .collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.term.cmp(&b.term))
    });
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    Stopword,
    Duplicate,
    OutOfContext,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemovedTerm {
    pub term: String,
    pub reason: RemovalReason,
}

/// State Reformulated Query: the expanded-then-refined query with the origin
/// of every term.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReformulatedQuery {
    pub original_terms: Vec<String>,
    pub expansion_terms: Vec<CandidateTerm>,
    pub task: TaskPointer,
    pub task_label: String,
    pub task_score: f64,
    pub removed: Vec<RemovedTerm>,
    pub final_terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReformulationConfig {
    pub stopwords: HashSet<String>,
    pub expansion_k: usize,
    pub out_of_context_threshold: f64,
}

impl From<&SkillConfig> for ReformulationConfig {
    fn from(c: &SkillConfig) -> Self {
        ReformulationConfig {
            stopwords: c.stopwords.iter().map(|s| s.to_lowercase()).collect(),
            expansion_k: c.expansion_k,
            out_of_context_threshold: OUT_OF_CONTEXT_THRESHOLD,
        }
    }
}

impl Default for ReformulationConfig {
    fn default() -> Self {
        (&SkillConfig::default()).into()
    }
}

/// Expands the query with the top complete candidates of the current task
/// state, then refines it. When the query names no catalog term the session's
/// task state is kept as it was.
pub fn reformulate(
    query_terms: &[String],
    profile: &UserProfile,
    catalog: &TaskCatalog,
    session_task: Option<&TaskPointer>,
    config: &ReformulationConfig,
) -> Result<ReformulatedQuery, ReformulationError> {
    let mut removed = Vec::new();
    let mut kept: Vec<String> = Vec::new();
    for term in query_terms.iter().map(|t| t.to_lowercase()) {
        if config.stopwords.contains(&term) {
            removed.push(RemovedTerm {
                term,
                reason: RemovalReason::Stopword,
            });
        } else if kept.contains(&term) {
            removed.push(RemovedTerm {
                term,
                reason: RemovalReason::Duplicate,
            });
        } else {
            kept.push(term);
        }
    }
    if kept.is_empty() {
        return Err(ReformulationError::EmptyQuery);
    }

    let detected = detect_task(&kept, catalog);
    let pointer = match session_task.filter(|p| catalog.state(p).is_some()) {
        Some(current) if detected.score == 0.0 => current.clone(),
        Some(current) => advance_task_state(current, &detected.pointer),
        None => detected.pointer.clone(),
    };
    let state = catalog
        .state(&pointer)
        .expect("pointer refers to a catalog state");

    let candidates = score_candidate_terms(&kept, state, profile, &config.stopwords);
    let mut expansion_terms = Vec::new();
    for c in candidates.into_iter().take(config.expansion_k) {
        if c.task_weight < config.out_of_context_threshold {
            removed.push(RemovedTerm {
                term: c.term,
                reason: RemovalReason::OutOfContext,
            });
        } else {
            expansion_terms.push(c);
        }
    }

    let final_terms = kept
        .iter()
        .cloned()
        .chain(expansion_terms.iter().map(|c| c.term.clone()))
        .collect();
    Ok(ReformulatedQuery {
        original_terms: query_terms.to_vec(),
        expansion_terms,
        task_label: state.label.clone(),
        task_score: detected.score,
        task: pointer,
        removed,
        final_terms,
    })
}

/// Pulls every final term toward 1 and decays the rest.
pub fn update_profile(profile: &UserProfile, accepted: &ReformulatedQuery) -> UserProfile {
    let reinforced: HashSet<&str> = accepted.final_terms.iter().map(String::as_str).collect();
    let mut term_weights: BTreeMap<String, f64> = profile
        .term_weights
        .iter()
        .map(|(t, &w)| {
            let w = if reinforced.contains(t.as_str()) {
                PROFILE_RETAIN * w + PROFILE_GAIN
            } else {
                PROFILE_DECAY * w
            };
            (t.clone(), w)
        })
        .collect();
    for term in &accepted.final_terms {
        term_weights.entry(term.clone()).or_insert(PROFILE_GAIN);
    }
    UserProfile {
        user_id: profile.user_id.clone(),
        term_weights,
        observation_count: profile.observation_count + 1,
    }
}
