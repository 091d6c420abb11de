//! Dialog flow: first-match node selection, context updates, response
//! rendering and jumps. The engine keeps no state between turns; everything
//! that survives a turn is in [`SessionState`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::entity::system::format_decimal;
use crate::entity::EntityMention;
use crate::intent::ResolvedIntent;
use crate::skill::{placeholder_spans, CmpOp, Condition, Literal, Placeholder, Skill, VarTest};

/// Context variables by name. Values are JSON scalars.
pub type Context = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DialogError {
    #[error("more than {limit} jumps in one turn (cycle at node '{node}')")]
    JumpLimitExceeded { limit: usize, node: String },
    #[error("no dialog node matched and the skill has no anything_else node")]
    NoFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    #[serde(default)]
    pub context: Context,
    #[serde(default)]
    pub last_node: Option<String>,
    #[serde(default)]
    pub turn_counter: u64,
    /// RFC 3339 timestamp of the last save.
    pub updated_at: String,
}

impl SessionState {
    pub fn new(session_id: impl Into<String>, updated_at: impl Into<String>) -> Self {
        SessionState {
            session_id: session_id.into(),
            context: Context::new(),
            last_node: None,
            turn_counter: 0,
            updated_at: updated_at.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnResult {
    pub responses: Vec<String>,
    pub fired_node: String,
    pub visited: Vec<String>,
    pub resolved: ResolvedIntent,
    pub entities: Vec<EntityMention>,
    pub updated_session: SessionState,
    pub diagnostics: Vec<String>,
}

/// Plain-text form of a context value.
pub fn render_value(value: &Value) -> String {
    match value {
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => n
            .as_f64()
            .map(format_decimal)
            .unwrap_or_else(|| n.to_string()),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn value_number(value: &Value) -> Option<f64> {
    match value {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok().filter(|v: &f64| v.is_finite()),
        _ => None,
    }
}

fn literal_number(lit: &Literal) -> Option<f64> {
    match lit {
        Literal::Number(n) => Some(*n),
        Literal::Str(s) => s.trim().parse().ok().filter(|v: &f64| v.is_finite()),
        _ => None,
    }
}

fn literal_text(lit: &Literal) -> String {
    match lit {
        Literal::Null => "null".into(),
        Literal::Bool(b) => b.to_string(),
        Literal::Number(n) => format_decimal(*n),
        Literal::Str(s) => s.clone(),
    }
}

fn value_text(value: &Value) -> String {
    match value {
        Value::Null => "null".into(),
        other => render_value(other),
    }
}

fn compare(
    name: &str,
    value: &Value,
    op: CmpOp,
    lit: &Literal,
    diagnostics: &mut Vec<String>,
) -> bool {
    if let (Some(a), Some(b)) = (value_number(value), literal_number(lit)) {
        return match op {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        };
    }
    match op {
        CmpOp::Eq => value_text(value) == literal_text(lit),
        CmpOp::Ne => value_text(value) != literal_text(lit),
        _ => {
            diagnostics.push(format!(
                "type mismatch: ${name} {} {} needs numeric operands",
                op.symbol(),
                lit
            ));
            false
        }
    }
}

/// Truth of a condition for one turn. Comparisons against an undefined
/// variable are false; ordered comparisons between non-numbers are false
/// and leave a diagnostic.
pub fn evaluate_condition(
    condition: &Condition,
    resolved: &ResolvedIntent,
    entities: &[EntityMention],
    context: &Context,
    diagnostics: &mut Vec<String>,
) -> bool {
    match condition {
        Condition::True | Condition::AnythingElse => true,
        Condition::IntentIs(name) => resolved.intent() == Some(name.as_str()),
        Condition::EntityPresent { entity, value } => entities
            .iter()
            .any(|m| m.entity == *entity && value.as_ref().is_none_or(|v| *v == m.value)),
        Condition::Var { name, test } => match (context.get(name), test) {
            (None, _) => false,
            (Some(v), VarTest::Truthy) => !matches!(v, Value::Null | Value::Bool(false)),
            (Some(v), VarTest::Compare(op, lit)) => compare(name, v, *op, lit, diagnostics),
        },
        Condition::Not(inner) => {
            !evaluate_condition(inner, resolved, entities, context, diagnostics)
        }
        Condition::And(l, r) => {
            evaluate_condition(l, resolved, entities, context, diagnostics)
                && evaluate_condition(r, resolved, entities, context, diagnostics)
        }
        Condition::Or(l, r) => {
            evaluate_condition(l, resolved, entities, context, diagnostics)
                || evaluate_condition(r, resolved, entities, context, diagnostics)
        }
    }
}

fn placeholder_value(
    ph: Placeholder<'_>,
    context: &Context,
    entities: &[EntityMention],
    diagnostics: &mut Vec<String>,
) -> Option<Value> {
    let found = match ph {
        Placeholder::Var(name) => context.get(name).cloned(),
        Placeholder::Entity(name) => entities
            .iter()
            .find(|m| m.entity == name)
            .map(|m| Value::String(m.value.clone())),
    };
    if found.is_none() {
        diagnostics.push(match ph {
            Placeholder::Var(name) => format!("placeholder {{${name}}} has no value"),
            Placeholder::Entity(name) => format!("placeholder {{@{name}}} has no mention"),
        });
    }
    found
}

/// Substitutes `{$var}` and `{@entity}`; missing values become "".
pub fn render_template(
    template: &str,
    context: &Context,
    entities: &[EntityMention],
    diagnostics: &mut Vec<String>,
) -> String {
    let mut out = String::with_capacity(template.len());
    let mut pos = 0;
    for (start, end, ph) in placeholder_spans(template) {
        out.push_str(&template[pos..start]);
        if let Some(v) = placeholder_value(ph, context, entities, diagnostics) {
            out.push_str(&render_value(&v));
        }
        pos = end;
    }
    out.push_str(&template[pos..]);
    out
}

/// A whole-string placeholder keeps the referenced value's type.
fn update_value(
    raw: &Value,
    context: &Context,
    entities: &[EntityMention],
    diagnostics: &mut Vec<String>,
) -> Value {
    let Value::String(template) = raw else {
        return raw.clone();
    };
    let spans = placeholder_spans(template);
    if let [(0, end, ph)] = spans.as_slice() {
        if *end == template.len() {
            return placeholder_value(*ph, context, entities, diagnostics)
                .unwrap_or(Value::String(String::new()));
        }
    }
    Value::String(render_template(template, context, entities, diagnostics))
}

/// Runs one dialog turn. The first node (document order) whose condition
/// holds fires; its context updates apply, its responses render, and any
/// `jump_to` chain is followed, appending responses on the way.
pub fn step(
    skill: &Skill,
    session: &SessionState,
    resolved: &ResolvedIntent,
    entities: &[EntityMention],
) -> Result<TurnResult, DialogError> {
    let mut diagnostics = Vec::new();
    let mut context = session.context.clone();

    let fired = skill
        .dialog_nodes
        .iter()
        .position(|n| {
            evaluate_condition(&n.condition, resolved, entities, &context, &mut diagnostics)
        })
        .or_else(|| {
            skill
                .dialog_nodes
                .iter()
                .position(|n| n.condition == Condition::AnythingElse)
        })
        .ok_or(DialogError::NoFallback)?;

    let mut responses = Vec::new();
    let mut visited = Vec::new();
    let mut current = fired;
    let mut jumps = 0;
    loop {
        let node = &skill.dialog_nodes[current];
        visited.push(node.id.clone());
        let snapshot = context.clone();
        for (var, raw) in &node.context_updates {
            let v = update_value(raw, &snapshot, entities, &mut diagnostics);
            context.insert(var.clone(), v);
        }
        for template in &node.responses {
            responses.push(render_template(
                template,
                &context,
                entities,
                &mut diagnostics,
            ));
        }
        let Some(target) = &node.jump_to else {
            break;
        };
        jumps += 1;
        if jumps > skill.config.max_jumps {
            return Err(DialogError::JumpLimitExceeded {
                limit: skill.config.max_jumps,
                node: node.id.clone(),
            });
        }
        current = skill
            .dialog_nodes
            .iter()
            .position(|n| n.id == *target)
            .expect("jump targets are checked at validation");
    }

    Ok(TurnResult {
        responses,
        fired_node: skill.dialog_nodes[fired].id.clone(),
        updated_session: SessionState {
            session_id: session.session_id.clone(),
            context,
            last_node: visited.last().cloned(),
            turn_counter: session.turn_counter + 1,
            updated_at: session.updated_at.clone(),
        },
        visited,
        resolved: resolved.clone(),
        entities: entities.to_vec(),
        diagnostics,
    })
}
