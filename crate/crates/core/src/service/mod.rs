//! Session-keeping message service. Every request is answered purely from
//! the request and the stored session (plus the user profile when a task
//! catalog is configured); the engine itself is immutable and shared.

pub mod http;
pub mod store;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::dialog::{Context, SessionState};
use crate::engine::{parse_reference_time, Engine, ReformulationInput, Turn, REFERENCE_TIME_VAR};
use crate::reformulation::{ReformulatedQuery, TaskCatalog};
use crate::skill::condition::is_ident;
use crate::text::{TextError, MAX_INPUT_CHARS};

pub use store::{
    FileProfileStore, FileSessionStore, MemoryProfileStore, MemorySessionStore, ProfileStore,
    SessionStore, StoreError, DEFAULT_SESSION_TTL_SECS,
};

/// Context variable naming the profile used for reformulation.
pub const USER_ID_VAR: &str = "user_id";
pub const ANONYMOUS_USER: &str = "anonymous";

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A settable clock for tests and replays.
#[derive(Debug)]
pub struct FixedClock(Mutex<DateTime<Utc>>);

impl FixedClock {
    pub fn new(at: DateTime<Utc>) -> Self {
        FixedClock(Mutex::new(at))
    }

    pub fn set(&self, at: DateTime<Utc>) {
        *self.0.lock().unwrap() = at;
    }

    pub fn advance(&self, by: chrono::Duration) {
        let mut t = self.0.lock().unwrap();
        *t += by;
    }
}

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().unwrap()
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("session '{0}' not found")]
    SessionNotFound(String),
    #[error("input is {0} characters, limit is {MAX_INPUT_CHARS}")]
    PayloadTooLarge(usize),
    #[error("not found")]
    NoRoute,
    #[error("method not allowed")]
    MethodNotAllowed,
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl ServiceError {
    pub fn status(&self) -> u16 {
        match self {
            ServiceError::BadRequest(_) => 400,
            ServiceError::SessionNotFound(_) | ServiceError::NoRoute => 404,
            ServiceError::MethodNotAllowed => 405,
            ServiceError::PayloadTooLarge(_) => 413,
            ServiceError::Store(_) => 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct MessageInput {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct MessageRequest {
    pub input: MessageInput,
    #[serde(default)]
    pub context: Option<Map<String, Value>>,
}

impl MessageRequest {
    pub fn text(text: impl Into<String>) -> Self {
        MessageRequest {
            input: MessageInput { text: text.into() },
            context: None,
        }
    }

    fn validate(&self) -> Result<(), ServiceError> {
        let len = self.input.text.chars().count();
        if len > MAX_INPUT_CHARS {
            return Err(ServiceError::PayloadTooLarge(len));
        }
        for (key, value) in self.context.iter().flatten() {
            if !is_ident(key) {
                return Err(ServiceError::BadRequest(format!(
                    "'{key}' is not a valid variable name"
                )));
            }
            if value.is_array() || value.is_object() {
                return Err(ServiceError::BadRequest(format!(
                    "context value for '{key}' must be a literal"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntentOutput {
    pub intent: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityOutput {
    pub entity: String,
    pub value: String,
    pub location: [usize; 2],
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenericOutput {
    pub response_type: &'static str,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MessageOutput {
    pub intents: Vec<IntentOutput>,
    pub entities: Vec<EntityOutput>,
    pub generic: Vec<GenericOutput>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corrected_text: Option<String>,
    pub out_of_scope: bool,
    pub nodes_visited: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub srq: Option<ReformulatedQuery>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MessageResponse {
    pub output: MessageOutput,
    pub context: Context,
}

impl From<&Turn> for MessageResponse {
    fn from(turn: &Turn) -> Self {
        let result = &turn.result;
        MessageResponse {
            output: MessageOutput {
                intents: turn
                    .nlu
                    .resolution
                    .ranked
                    .iter()
                    .map(|p| IntentOutput {
                        intent: p.intent.clone(),
                        confidence: p.confidence,
                    })
                    .collect(),
                entities: result
                    .entities
                    .iter()
                    .map(|m| EntityOutput {
                        entity: m.entity.clone(),
                        value: m.value.clone(),
                        location: [m.start, m.end],
                        confidence: m.confidence,
                    })
                    .collect(),
                generic: result
                    .responses
                    .iter()
                    .map(|text| GenericOutput {
                        response_type: "text",
                        text: text.clone(),
                    })
                    .collect(),
                corrected_text: turn.nlu.corrected_text.clone(),
                out_of_scope: !result.resolved.is_in_scope(),
                nodes_visited: result.visited.clone(),
                srq: turn.srq.clone(),
            },
            context: result.updated_session.context.clone(),
        }
    }
}

/// Status code and JSON body of a routed request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

impl ApiResponse {
    fn json(status: u16, value: &impl Serialize) -> Self {
        ApiResponse {
            status,
            body: serde_json::to_vec(value).expect("responses serialize"),
        }
    }

    fn empty(status: u16) -> Self {
        ApiResponse {
            status,
            body: Vec::new(),
        }
    }

    fn error(err: &ServiceError) -> Self {
        Self::json(
            err.status(),
            &json!({ "error": err.to_string(), "code": err.status() }),
        )
    }
}

pub struct Service {
    engine: Arc<Engine>,
    sessions: Arc<dyn SessionStore>,
    profiles: Arc<dyn ProfileStore>,
    catalog: Option<Arc<TaskCatalog>>,
    clock: Arc<dyn Clock>,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    started: Instant,
}

impl Service {
    pub fn new(engine: Arc<Engine>, sessions: Arc<dyn SessionStore>) -> Self {
        Service {
            engine,
            sessions,
            profiles: Arc::new(MemoryProfileStore::default()),
            catalog: None,
            clock: Arc::new(SystemClock),
            locks: Mutex::new(HashMap::new()),
            started: Instant::now(),
        }
    }

    /// Enables query reformulation against `catalog`, with profiles kept in
    /// `profiles`.
    pub fn with_reformulation(
        mut self,
        catalog: Arc<TaskCatalog>,
        profiles: Arc<dyn ProfileStore>,
    ) -> Self {
        self.catalog = Some(catalog);
        self.profiles = profiles;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    fn timestamp(&self) -> (DateTime<Utc>, String) {
        let now = self.clock.now();
        (now, now.to_rfc3339_opts(SecondsFormat::Secs, true))
    }

    fn session_lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .unwrap()
            .entry(id.to_string())
            .or_default()
            .clone()
    }

    pub fn create_session(&self) -> Result<String, ServiceError> {
        let id = uuid::Uuid::new_v4().to_string();
        let (_, stamp) = self.timestamp();
        self.sessions
            .create(&SessionState::new(id.clone(), stamp))?;
        Ok(id)
    }

    pub fn delete_session(&self, id: &str) -> Result<(), ServiceError> {
        let lock = self.session_lock(id);
        let _guard = lock.lock().unwrap();
        let removed = self.sessions.delete(id)?;
        self.locks.lock().unwrap().remove(id);
        if removed {
            Ok(())
        } else {
            Err(ServiceError::SessionNotFound(id.to_string()))
        }
    }

    /// Load, apply overrides, run the turn, save. Messages to one session are
    /// serialized within this process.
    pub fn handle_message(
        &self,
        id: &str,
        request: &MessageRequest,
    ) -> Result<MessageResponse, ServiceError> {
        request.validate()?;
        let lock = self.session_lock(id);
        let _guard = lock.lock().unwrap();

        let (now, stamp) = self.timestamp();
        let mut session = self
            .sessions
            .load(id, now)?
            .ok_or_else(|| ServiceError::SessionNotFound(id.to_string()))?;

        let overrides = request.context.clone().unwrap_or_default();
        let reference = match overrides.get(REFERENCE_TIME_VAR) {
            Some(v) => v.as_str().and_then(parse_reference_time).ok_or_else(|| {
                ServiceError::BadRequest(format!(
                    "{REFERENCE_TIME_VAR} must be an ISO 8601 datetime"
                ))
            })?,
            None => now.naive_utc(),
        };
        session.context.extend(overrides);

        let profile = match &self.catalog {
            Some(_) => {
                let user = session
                    .context
                    .get(USER_ID_VAR)
                    .and_then(Value::as_str)
                    .unwrap_or(ANONYMOUS_USER)
                    .to_string();
                if !store::valid_key(&user) {
                    return Err(ServiceError::BadRequest(format!(
                        "invalid {USER_ID_VAR} '{user}'"
                    )));
                }
                Some(self.profiles.load(&user)?)
            }
            None => None,
        };
        let reformulation = self
            .catalog
            .as_deref()
            .zip(profile.as_ref())
            .map(|(catalog, profile)| ReformulationInput { catalog, profile });

        let turn = self
            .engine
            .turn(&session, &request.input.text, reference, reformulation)
            .map_err(|e| match e {
                TextError::InputTooLong(n) => ServiceError::PayloadTooLarge(n),
                other => ServiceError::BadRequest(other.to_string()),
            })?;

        let mut updated = turn.result.updated_session.clone();
        updated.updated_at = stamp;
        self.sessions.save(&updated)?;
        if let Some(p) = &turn.profile {
            self.profiles.save(p)?;
        }
        Ok(MessageResponse::from(&turn))
    }

    pub fn health(&self) -> Value {
        let skill = self.engine.skill();
        json!({
            "status": "ok",
            "skill": skill.name,
            "counts": {
                "intents": skill.intents.len(),
                "entities": skill.entities.len(),
                "dialog_nodes": skill.dialog_nodes.len(),
            },
            "uptime_seconds": self.started.elapsed().as_secs(),
        })
    }

    /// Dispatches one HTTP request. Never panics on client input.
    pub fn route(&self, method: &str, path: &str, body: &[u8]) -> ApiResponse {
        match self.dispatch(method, path, body) {
            Ok(r) => r,
            Err(e) => ApiResponse::error(&e),
        }
    }

    fn dispatch(&self, method: &str, path: &str, body: &[u8]) -> Result<ApiResponse, ServiceError> {
        let segments: Vec<&str> = path.trim_end_matches('/').split('/').skip(1).collect();
        match (method, segments.as_slice()) {
            ("GET", ["health"]) => Ok(ApiResponse::json(200, &self.health())),
            ("POST", ["v2", "sessions"]) => {
                let id = self.create_session()?;
                Ok(ApiResponse::json(201, &json!({ "session_id": id })))
            }
            ("POST", ["v2", "sessions", id, "message"]) => {
                let request: MessageRequest = serde_json::from_slice(body)
                    .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
                let response = self.handle_message(id, &request)?;
                Ok(ApiResponse::json(200, &response))
            }
            ("DELETE", ["v2", "sessions", id]) => {
                self.delete_session(id)?;
                Ok(ApiResponse::empty(204))
            }
            (_, ["health"])
            | (_, ["v2", "sessions"])
            | (_, ["v2", "sessions", _, "message"])
            | (_, ["v2", "sessions", _]) => Err(ServiceError::MethodNotAllowed),
            _ => Err(ServiceError::NoRoute),
        }
    }
}
