//! Golden transcripts: each user line is written as `> text`, followed by
//! the assistant's responses verbatim, one per line.

use chrono::NaiveDateTime;
use thiserror::Error;

use crate::dialog::SessionState;
use crate::engine::Engine;
use crate::text::TextError;

pub const USER_PREFIX: &str = "> ";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptTurn {
    pub user: String,
    pub responses: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: response before any user line")]
pub struct TranscriptError {
    pub line: usize,
}

pub fn parse(text: &str) -> Result<Vec<TranscriptTurn>, TranscriptError> {
    let mut turns: Vec<TranscriptTurn> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if let Some(user) = line.strip_prefix(USER_PREFIX) {
            turns.push(TranscriptTurn {
                user: user.to_string(),
                responses: Vec::new(),
            });
        } else {
            turns
                .last_mut()
                .ok_or(TranscriptError { line: n + 1 })?
                .responses
                .push(line.to_string());
        }
    }
    Ok(turns)
}

pub fn render(turns: &[TranscriptTurn]) -> String {
    let mut out = String::new();
    for turn in turns {
        out.push_str(USER_PREFIX);
        out.push_str(&turn.user);
        out.push('\n');
        for r in &turn.responses {
            out.push_str(r);
            out.push('\n');
        }
    }
    out
}

/// Plays the user lines through one fresh session.
pub fn record<'a>(
    engine: &Engine,
    inputs: impl IntoIterator<Item = &'a str>,
    reference: NaiveDateTime,
) -> Result<Vec<TranscriptTurn>, TextError> {
    let mut session = SessionState::new("transcript", "");
    let mut turns = Vec::new();
    for input in inputs {
        let turn = engine.turn(&session, input, reference, None)?;
        session = turn.result.updated_session;
        turns.push(TranscriptTurn {
            user: input.to_string(),
            responses: turn.result.responses,
        });
    }
    Ok(turns)
}
