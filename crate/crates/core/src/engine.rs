//! The per-utterance pipeline shared by the REPL, the HTTP service and the
//! Python bindings: tokenize, autocorrect, resolve the intent, recognize
//! entities, optionally reformulate, then run the dialog turn.

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::dialog::{self, render_template, DialogError, SessionState, TurnResult};
use crate::entity::{EntityMention, EntityRecognizer};
use crate::intent::{IntentModel, Resolution, TrainingError};
use crate::reformulation::{
    reformulate, update_profile, ReformulatedQuery, ReformulationConfig, TaskCatalog, TaskPointer,
    UserProfile,
};
use crate::skill::{parse_skill_with_warnings, Condition, Skill, SkillError};
use crate::text::{
    autocorrect, corrected_text, tokenize, TextError, Token, Vocabulary, WordlistError,
};

/// Reply used when a turn cannot be completed and the fallback node has no
/// text of its own.
pub const DEFAULT_FALLBACK: &str = "Sorry, I didn't catch that.";

pub const REFERENCE_TIME_VAR: &str = "sys_reference_time";
pub const TASK_ID_VAR: &str = "task_id";
pub const TASK_STATE_VAR: &str = "task_state";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Skill(#[from] SkillError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Wordlist(#[from] WordlistError),
}

/// Formats a reference instant the way it is stored in the context.
pub fn format_reference_time(t: NaiveDateTime) -> String {
    t.format("%Y-%m-%dT%H:%M:%S").to_string()
}

/// Accepts `YYYY-MM-DDTHH:MM:SS`, RFC 3339 (offset dropped after
/// conversion to its local wall time) or a bare date (midnight).
pub fn parse_reference_time(text: &str) -> Option<NaiveDateTime> {
    let text = text.trim();
    NaiveDateTime::parse_from_str(text, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(text, "%Y-%m-%dT%H:%M"))
        .ok()
        .or_else(|| {
            DateTime::parse_from_rfc3339(text)
                .ok()
                .map(|d| d.naive_local())
        })
        .or_else(|| {
            NaiveDate::parse_from_str(text, "%Y-%m-%d")
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
        })
}

/// Understanding of one utterance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NluResult {
    pub text: String,
    pub tokens: Vec<Token>,
    pub corrected_text: Option<String>,
    pub resolution: Resolution,
    pub entities: Vec<EntityMention>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Turn {
    pub nlu: NluResult,
    pub result: TurnResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub srq: Option<ReformulatedQuery>,
    #[serde(skip)]
    pub profile: Option<UserProfile>,
}

/// Task catalog and user profile for reformulation during a turn.
#[derive(Debug, Clone, Copy)]
pub struct ReformulationInput<'a> {
    pub catalog: &'a TaskCatalog,
    pub profile: &'a UserProfile,
}

#[derive(Debug, Clone)]
pub struct Engine {
    skill: Skill,
    warnings: Vec<String>,
    vocabulary: Vocabulary,
    model: IntentModel,
    recognizer: EntityRecognizer,
    reformulation: ReformulationConfig,
}

impl Engine {
    pub fn new(skill: Skill) -> Result<Self, EngineError> {
        let warnings = skill.validate()?;
        Ok(Engine {
            vocabulary: Vocabulary::from_skill(&skill),
            model: IntentModel::train(&skill)?,
            recognizer: EntityRecognizer::new(&skill),
            reformulation: (&skill.config).into(),
            warnings,
            skill,
        })
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, EngineError> {
        let (skill, _) = parse_skill_with_warnings(bytes)?;
        Self::new(skill)
    }

    /// Adds an extra `word<TAB>frequency` list to the autocorrect vocabulary.
    pub fn with_wordlist(mut self, wordlist: &str) -> Result<Self, EngineError> {
        self.vocabulary.extend_from_wordlist(wordlist)?;
        Ok(self)
    }

    pub fn skill(&self) -> &Skill {
        &self.skill
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn model(&self) -> &IntentModel {
        &self.model
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn recognizer(&self) -> &EntityRecognizer {
        &self.recognizer
    }

    pub fn reformulation_config(&self) -> &ReformulationConfig {
        &self.reformulation
    }

    /// Tokens after autocorrection (when enabled).
    pub fn prepare(&self, text: &str) -> Result<Vec<Token>, TextError> {
        let tokens = tokenize(text)?;
        Ok(if self.skill.config.autocorrect_enabled {
            autocorrect(&tokens, &self.vocabulary)
        } else {
            tokens
        })
    }

    pub fn analyze(&self, text: &str, reference: NaiveDateTime) -> Result<NluResult, TextError> {
        let tokens = self.prepare(text)?;
        let resolution = self.model.resolve(&tokens, &self.skill.config);
        let entities = self.recognizer.recognize(text, &tokens, reference);
        Ok(NluResult {
            text: text.to_string(),
            corrected_text: corrected_text(text, &tokens),
            tokens,
            resolution,
            entities,
        })
    }

    /// Reformulated query for an analyzed utterance; `None` when nothing but
    /// stopwords remain.
    pub fn reformulate(
        &self,
        nlu: &NluResult,
        input: ReformulationInput<'_>,
        current: Option<&TaskPointer>,
    ) -> Option<ReformulatedQuery> {
        let terms: Vec<String> = nlu.tokens.iter().map(|t| t.normalized.clone()).collect();
        reformulate(
            &terms,
            input.profile,
            input.catalog,
            current,
            &self.reformulation,
        )
        .ok()
    }

    /// Runs the dialog for an analyzed utterance. Dialog failures degrade to
    /// the fallback node instead of erroring.
    pub fn respond(&self, session: &SessionState, nlu: &NluResult) -> TurnResult {
        let verdict = &nlu.resolution.verdict;
        match dialog::step(&self.skill, session, verdict, &nlu.entities) {
            Ok(result) => result,
            Err(err) => self.fallback_turn(session, nlu, err),
        }
    }

    fn fallback_turn(
        &self,
        session: &SessionState,
        nlu: &NluResult,
        err: DialogError,
    ) -> TurnResult {
        let mut diagnostics = vec![err.to_string()];
        let node = self
            .skill
            .dialog_nodes
            .iter()
            .find(|n| n.condition == Condition::AnythingElse);
        let mut responses: Vec<String> = node
            .map(|n| {
                n.responses
                    .iter()
                    .map(|r| render_template(r, &session.context, &nlu.entities, &mut diagnostics))
                    .collect()
            })
            .unwrap_or_default();
        if responses.is_empty() {
            responses.push(DEFAULT_FALLBACK.to_string());
        }
        let fired = node.map(|n| n.id.clone()).unwrap_or_default();
        TurnResult {
            responses,
            fired_node: fired.clone(),
            visited: vec![fired.clone()],
            resolved: nlu.resolution.verdict.clone(),
            entities: nlu.entities.clone(),
            updated_session: SessionState {
                session_id: session.session_id.clone(),
                context: session.context.clone(),
                last_node: Some(fired),
                turn_counter: session.turn_counter + 1,
                updated_at: session.updated_at.clone(),
            },
            diagnostics,
        }
    }

    /// One full conversational turn. The reference time is written to the
    /// context before the dialog runs; with reformulation input the detected
    /// task state is too, and the reinforced profile is returned.
    pub fn turn(
        &self,
        session: &SessionState,
        text: &str,
        reference: NaiveDateTime,
        reformulation: Option<ReformulationInput<'_>>,
    ) -> Result<Turn, TextError> {
        let nlu = self.analyze(text, reference)?;
        let mut session = session.clone();
        session.context.insert(
            REFERENCE_TIME_VAR.to_string(),
            Value::String(format_reference_time(reference)),
        );
        let mut srq = None;
        let mut profile = None;
        if let Some(input) = reformulation {
            let current = task_pointer(&session);
            srq = self.reformulate(&nlu, input, current.as_ref());
            if let Some(q) = &srq {
                session
                    .context
                    .insert(TASK_ID_VAR.into(), Value::String(q.task.task_id.clone()));
                session.context.insert(
                    TASK_STATE_VAR.into(),
                    Value::from(q.task.state_index as u64),
                );
                profile = Some(update_profile(input.profile, q));
            }
        }
        let result = self.respond(&session, &nlu);
        Ok(Turn {
            nlu,
            result,
            srq,
            profile,
        })
    }
}

/// Task state recorded in a session's context, if any.
pub fn task_pointer(session: &SessionState) -> Option<TaskPointer> {
    let task = session.context.get(TASK_ID_VAR)?.as_str()?;
    let state = session.context.get(TASK_STATE_VAR)?.as_u64()?;
    Some(TaskPointer::new(task, state as usize))
}
