//! Skill documents: intents, entities, dialog nodes and configuration.
//!
//! A skill is a single JSON document. [`parse_skill`] checks syntax, schema
//! and every structural invariant; [`serialize_skill`] writes the canonical
//! form (sorted keys, two-space indent, trailing newline).

pub mod condition;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use condition::{parse_condition, CmpOp, Condition, ConditionSyntaxError, Literal, VarTest};

use condition::is_ident;

/// Prefix reserved for built-in system entities (`@sys_date`, ...).
pub const SYSTEM_ENTITY_PREFIX: &str = "sys_";

/// Names of the built-in system entities.
pub const SYSTEM_ENTITIES: [&str; 5] = [
    "sys_number",
    "sys_currency",
    "sys_time",
    "sys_date",
    "sys_range",
];

/// Context variables the runtime always provides.
pub const BUILTIN_VARIABLES: [&str; 3] = ["sys_reference_time", "task_id", "task_state"];

/// Minimum annotated mentions before a contextual entity gets a tagger.
pub const MIN_CONTEXTUAL_MENTIONS: usize = 5;

#[derive(Debug, Error)]
pub enum SkillError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid {element}: {message}")]
    Validation { element: String, message: String },
}

impl SkillError {
    fn invalid(element: impl Into<String>, message: impl Into<String>) -> Self {
        SkillError::Validation {
            element: element.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Skill {
    pub name: String,
    pub language: String,
    pub intents: Vec<IntentDef>,
    pub entities: Vec<EntityDef>,
    pub dialog_nodes: Vec<DialogNode>,
    #[serde(default)]
    pub config: SkillConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntentDef {
    pub name: String,
    pub examples: Vec<Example>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example {
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mentions: Vec<MentionAnnotation>,
}

/// An entity mention inside a training example. Offsets are character
/// positions, `end` exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MentionAnnotation {
    pub entity: String,
    pub start: usize,
    pub end: usize,
    pub value: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Dictionary,
    Pattern,
    Contextual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityDef {
    pub name: String,
    pub kind: EntityKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<EntityValue>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub patterns: Vec<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fuzzy: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityValue {
    pub value: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub synonyms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogNode {
    pub id: String,
    pub condition: Condition,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub responses: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub context_updates: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_to: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkillConfig {
    pub intent_threshold: f64,
    pub oos_similarity_floor: f64,
    pub autocorrect_enabled: bool,
    pub max_jumps: usize,
    pub stopwords: Vec<String>,
    pub expansion_k: usize,
}

pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "from", "i", "if", "in", "into",
    "is", "it", "me", "my", "of", "on", "or", "our", "so", "that", "the", "their", "this", "to",
    "was", "we", "with", "you", "your",
];

impl Default for SkillConfig {
    fn default() -> Self {
        SkillConfig {
            intent_threshold: 0.5,
            oos_similarity_floor: 0.35,
            autocorrect_enabled: true,
            max_jumps: 25,
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
            expansion_k: 3,
        }
    }
}

impl Skill {
    pub fn intent(&self, name: &str) -> Option<&IntentDef> {
        self.intents.iter().find(|i| i.name == name)
    }

    pub fn entity(&self, name: &str) -> Option<&EntityDef> {
        self.entities.iter().find(|e| e.name == name)
    }

    pub fn node(&self, id: &str) -> Option<&DialogNode> {
        self.dialog_nodes.iter().find(|n| n.id == id)
    }

    pub fn has_entity(&self, name: &str) -> bool {
        self.entity(name).is_some() || SYSTEM_ENTITIES.contains(&name)
    }

    /// Variables assigned by some node, plus the runtime built-ins.
    pub fn declared_variables(&self) -> HashSet<&str> {
        self.dialog_nodes
            .iter()
            .flat_map(|n| n.context_updates.keys().map(String::as_str))
            .chain(BUILTIN_VARIABLES)
            .collect()
    }

    /// Checks every invariant. Hard violations are errors; softer findings
    /// (unknown `{$var}` placeholders, duplicate examples, undertrained
    /// contextual entities) come back as warnings.
    pub fn validate(&self) -> Result<Vec<String>, SkillError> {
        let mut warnings = Vec::new();

        if !is_ident(&self.name.replace('-', "_")) {
            return Err(SkillError::invalid(
                "skill name",
                format!("'{}'", self.name),
            ));
        }
        if self.language != "en" {
            return Err(SkillError::invalid(
                "language",
                format!("'{}' (only \"en\" is supported)", self.language),
            ));
        }
        self.validate_config()?;

        if self.intents.is_empty() {
            return Err(SkillError::invalid("intents", "skill declares no intents"));
        }
        let mut seen = HashSet::new();
        for entity in &self.entities {
            if !is_ident(&entity.name) || entity.name.starts_with(SYSTEM_ENTITY_PREFIX) {
                return Err(SkillError::invalid(
                    format!("entity '{}'", entity.name),
                    "name must match [a-z][a-z0-9_]* and not use the sys_ prefix",
                ));
            }
            if !seen.insert(entity.name.as_str()) {
                return Err(SkillError::invalid(
                    format!("entity '{}'", entity.name),
                    "duplicate entity name",
                ));
            }
            validate_entity(entity)?;
        }

        let mut seen = HashSet::new();
        let mut example_owner: HashMap<String, &str> = HashMap::new();
        let mut contextual_mentions: HashMap<&str, usize> = HashMap::new();
        for intent in &self.intents {
            let element = format!("intent '{}'", intent.name);
            if !is_ident(&intent.name) {
                return Err(SkillError::invalid(
                    element,
                    "name must match [a-z][a-z0-9_]*",
                ));
            }
            if !seen.insert(intent.name.as_str()) {
                return Err(SkillError::invalid(element, "duplicate intent name"));
            }
            if intent.examples.is_empty() {
                return Err(SkillError::invalid(element, "intent has no examples"));
            }
            for example in &intent.examples {
                self.validate_example(&intent.name, example)?;
                for m in &example.mentions {
                    if self.entity(&m.entity).map(|e| e.kind) == Some(EntityKind::Contextual) {
                        *contextual_mentions.entry(m.entity.as_str()).or_default() += 1;
                    }
                }
                let key = crate::text::normalize_phrase(&example.text);
                if let Some(owner) = example_owner.get(&key) {
                    warnings.push(format!(
                        "example '{}' appears in intents '{}' and '{}'; exact matching keeps '{}'",
                        example.text, owner, intent.name, owner
                    ));
                } else {
                    example_owner.insert(key, &intent.name);
                }
            }
        }
        for entity in self
            .entities
            .iter()
            .filter(|e| e.kind == EntityKind::Contextual)
        {
            let count = contextual_mentions
                .get(entity.name.as_str())
                .copied()
                .unwrap_or(0);
            if count < MIN_CONTEXTUAL_MENTIONS {
                warnings.push(format!(
                    "contextual entity '{}' has {count} annotated mentions (need {MIN_CONTEXTUAL_MENTIONS}); tagger training skipped",
                    entity.name
                ));
            }
        }

        self.validate_nodes(&mut warnings)?;
        Ok(warnings)
    }

    fn validate_config(&self) -> Result<(), SkillError> {
        let c = &self.config;
        for (field, v) in [
            ("intent_threshold", c.intent_threshold),
            ("oos_similarity_floor", c.oos_similarity_floor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SkillError::invalid(
                    format!("config.{field}"),
                    format!("{v} is outside [0, 1]"),
                ));
            }
        }
        if c.max_jumps < 1 {
            return Err(SkillError::invalid(
                "config.max_jumps",
                "must be at least 1",
            ));
        }
        if c.expansion_k < 1 {
            return Err(SkillError::invalid(
                "config.expansion_k",
                "must be at least 1",
            ));
        }
        Ok(())
    }

    fn validate_example(&self, intent: &str, example: &Example) -> Result<(), SkillError> {
        let element = || format!("example '{}' of intent '{intent}'", example.text);
        let len = example.text.chars().count();
        let mut spans: Vec<(usize, usize)> = Vec::new();
        for m in &example.mentions {
            if !(m.start < m.end && m.end <= len) {
                return Err(SkillError::invalid(
                    element(),
                    format!("mention span {}..{} out of bounds", m.start, m.end),
                ));
            }
            if self.entity(&m.entity).is_none() {
                return Err(SkillError::invalid(
                    element(),
                    format!("mention references undeclared entity '{}'", m.entity),
                ));
            }
            if spans.iter().any(|&(s, e)| m.start < e && s < m.end) {
                return Err(SkillError::invalid(element(), "overlapping mention spans"));
            }
            spans.push((m.start, m.end));
        }
        Ok(())
    }

    fn validate_nodes(&self, warnings: &mut Vec<String>) -> Result<(), SkillError> {
        let ids: HashSet<&str> = self.dialog_nodes.iter().map(|n| n.id.as_str()).collect();
        if ids.len() != self.dialog_nodes.len() {
            let mut seen = HashSet::new();
            let dup = self
                .dialog_nodes
                .iter()
                .find(|n| !seen.insert(n.id.as_str()))
                .expect("duplicate exists");
            return Err(SkillError::invalid(
                format!("dialog node '{}'", dup.id),
                "duplicate node id",
            ));
        }
        let vars = self.declared_variables();
        for node in &self.dialog_nodes {
            let element = || format!("dialog node '{}'", node.id);
            if !is_node_id(&node.id) {
                return Err(SkillError::invalid(element(), "invalid node id"));
            }
            if node.condition.has_nested_anything_else() {
                return Err(SkillError::invalid(
                    element(),
                    "anything_else must be the whole condition",
                ));
            }
            if node.responses.is_empty() && node.jump_to.is_none() {
                return Err(SkillError::invalid(
                    element(),
                    "node needs at least one response or a jump_to",
                ));
            }
            if let Some(target) = &node.jump_to {
                if !ids.contains(target.as_str()) {
                    return Err(SkillError::invalid(
                        element(),
                        format!("jump_to target '{target}' does not exist"),
                    ));
                }
            }
            let mut missing = None;
            node.condition.walk(&mut |c| match c {
                Condition::IntentIs(name) if self.intent(name).is_none() => {
                    missing.get_or_insert(format!("condition references unknown intent #{name}"));
                }
                Condition::EntityPresent { entity, .. } if !self.has_entity(entity) => {
                    missing.get_or_insert(format!("condition references unknown entity @{entity}"));
                }
                _ => {}
            });
            if let Some(message) = missing {
                return Err(SkillError::invalid(element(), message));
            }
            for (var, value) in &node.context_updates {
                if !is_ident(var) {
                    return Err(SkillError::invalid(
                        element(),
                        format!("context variable '{var}' must match [a-z][a-z0-9_]*"),
                    ));
                }
                match value {
                    serde_json::Value::Array(_) | serde_json::Value::Object(_) => {
                        return Err(SkillError::invalid(
                            element(),
                            format!("context update '{var}' must be a literal"),
                        ))
                    }
                    serde_json::Value::String(s) => {
                        self.check_placeholders(s, &vars, element, warnings)?
                    }
                    _ => {}
                }
            }
            for response in &node.responses {
                self.check_placeholders(response, &vars, element, warnings)?;
            }
        }
        if !self
            .dialog_nodes
            .iter()
            .any(|n| n.condition == Condition::AnythingElse)
        {
            return Err(SkillError::invalid(
                "dialog_nodes",
                "no anything_else fallback node",
            ));
        }
        Ok(())
    }

    fn check_placeholders(
        &self,
        template: &str,
        vars: &HashSet<&str>,
        element: impl Fn() -> String,
        warnings: &mut Vec<String>,
    ) -> Result<(), SkillError> {
        for placeholder in placeholders(template) {
            match placeholder {
                Placeholder::Entity(name) if !self.has_entity(name) => {
                    return Err(SkillError::invalid(
                        element(),
                        format!("placeholder references unknown entity {{@{name}}}"),
                    ));
                }
                Placeholder::Var(name) if !vars.contains(name) => {
                    warnings.push(format!(
                        "{}: placeholder {{${name}}} is never assigned",
                        element()
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn is_node_id(id: &str) -> bool {
    let mut chars = id.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn validate_entity(entity: &EntityDef) -> Result<(), SkillError> {
    let element = || format!("entity '{}'", entity.name);
    match entity.kind {
        EntityKind::Dictionary => {
            if entity.values.is_empty() {
                return Err(SkillError::invalid(
                    element(),
                    "dictionary entity has no values",
                ));
            }
            if !entity.patterns.is_empty() {
                return Err(SkillError::invalid(
                    element(),
                    "patterns are only allowed on pattern entities",
                ));
            }
            let mut seen = HashSet::new();
            for v in &entity.values {
                if v.value.trim().is_empty() {
                    return Err(SkillError::invalid(element(), "empty canonical value"));
                }
                if !seen.insert(v.value.as_str()) {
                    return Err(SkillError::invalid(
                        element(),
                        format!("duplicate canonical value '{}'", v.value),
                    ));
                }
            }
        }
        EntityKind::Pattern => {
            if entity.patterns.is_empty() {
                return Err(SkillError::invalid(
                    element(),
                    "pattern entity has no patterns",
                ));
            }
            for p in &entity.patterns {
                Regex::new(p).map_err(|e| {
                    SkillError::invalid(element(), format!("pattern '{p}' does not compile: {e}"))
                })?;
            }
        }
        EntityKind::Contextual => {
            if !entity.patterns.is_empty() {
                return Err(SkillError::invalid(
                    element(),
                    "patterns are only allowed on pattern entities",
                ));
            }
        }
    }
    if entity.fuzzy && entity.kind != EntityKind::Dictionary {
        return Err(SkillError::invalid(
            element(),
            "fuzzy matching requires a dictionary entity",
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placeholder<'a> {
    Var(&'a str),
    Entity(&'a str),
}

/// A placeholder occurrence: byte range of the full `{...}` marker plus what
/// it names.
pub fn placeholder_spans(template: &str) -> Vec<(usize, usize, Placeholder<'_>)> {
    let mut out = Vec::new();
    let bytes = template.as_bytes();
    let mut i = 0;
    while i + 1 < bytes.len() {
        if bytes[i] == b'{' && (bytes[i + 1] == b'$' || bytes[i + 1] == b'@') {
            if let Some(close) = template[i + 2..].find('}') {
                let name = &template[i + 2..i + 2 + close];
                if is_ident(name) {
                    let ph = if bytes[i + 1] == b'$' {
                        Placeholder::Var(name)
                    } else {
                        Placeholder::Entity(name)
                    };
                    let end = i + 3 + close;
                    out.push((i, end, ph));
                    i = end;
                    continue;
                }
            }
        }
        i += 1;
    }
    out
}

pub fn placeholders(template: &str) -> impl Iterator<Item = Placeholder<'_>> {
    placeholder_spans(template).into_iter().map(|(_, _, p)| p)
}

/// Parses and validates a skill document, returning it with any warnings.
pub fn parse_skill_with_warnings(bytes: &[u8]) -> Result<(Skill, Vec<String>), SkillError> {
    let skill: Skill = serde_json::from_slice(bytes).map_err(|e| {
        use serde_json::error::Category;
        match e.classify() {
            Category::Syntax | Category::Eof | Category::Io => SkillError::Syntax {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            },
            Category::Data => SkillError::Schema(e.to_string()),
        }
    })?;
    let warnings = skill.validate()?;
    Ok((skill, warnings))
}

pub fn parse_skill(bytes: &[u8]) -> Result<Skill, SkillError> {
    parse_skill_with_warnings(bytes).map(|(skill, _)| skill)
}

/// Canonical document: sorted object keys, two-space indent, `\n` endings.
pub fn serialize_skill(skill: &Skill) -> Vec<u8> {
    // serde_json::Map is ordered by key, so going through Value sorts
    // struct fields as well as map entries.
    let value = serde_json::to_value(skill).expect("skill is always representable as JSON");
    let mut out = serde_json::to_vec_pretty(&value).expect("JSON value serializes");
    out.push(b'\n');
    out
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityKind::Dictionary => "dictionary",
            EntityKind::Pattern => "pattern",
            EntityKind::Contextual => "contextual",
        })
    }
}
