//! Rule-plus-statistics chatbot engine for fitness skills.
//!
//! A skill document (intents, entities, dialog nodes) is compiled into an
//! [`Engine`], which turns user utterances into responses. The [`service`]
//! module wraps the engine in a session-keeping HTTP API.

pub mod dialog;
pub mod engine;
pub mod entity;
pub mod eval;
pub mod fixtures;
pub mod intent;
pub mod reformulation;
pub mod service;
pub mod skill;
pub mod text;
pub mod transcript;

pub use dialog::{step, Context, DialogError, SessionState, TurnResult};
pub use engine::{Engine, EngineError, NluResult, ReformulationInput, Turn};
pub use entity::{EntityMention, EntityRecognizer, RecognizerKind};
pub use intent::{IntentModel, IntentPrediction, OosReason, Resolution, ResolvedIntent};
pub use reformulation::{reformulate, ReformulatedQuery, TaskCatalog, TaskPointer, UserProfile};
pub use skill::{parse_condition, parse_skill, serialize_skill, Condition, Skill, SkillError};
pub use text::{levenshtein, phonetic_code, tokenize, Token, Vocabulary};
