//! Entity recognizers: dictionary, fuzzy, pattern, system and contextual,
//! plus the overlap resolution that merges their output.

pub mod contextual;
pub mod system;

use std::cmp::Ordering;

use chrono::NaiveDateTime;
use regex::Regex;
use serde::Serialize;

use crate::skill::{EntityDef, EntityKind, Skill};
use crate::text::{levenshtein, tokenize, Token};

pub use contextual::ContextualTagger;
pub use system::{recognize_system, SystemValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecognizerKind {
    Pattern,
    Dictionary,
    System,
    Fuzzy,
    Contextual,
}

impl RecognizerKind {
    /// Lower ranks win overlaps between equally long, equally confident spans.
    pub fn precedence(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityMention {
    pub entity: String,
    pub value: String,
    /// Character offsets, end exclusive.
    pub start: usize,
    pub end: usize,
    pub confidence: f64,
    pub recognizer: RecognizerKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemValue>,
}

impl EntityMention {
    pub fn span_len(&self) -> usize {
        self.end - self.start
    }

    pub fn overlaps(&self, other: &EntityMention) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Token sequences for each value and synonym of a dictionary entity.
#[derive(Debug, Clone)]
struct Lexicon {
    entity: String,
    fuzzy: bool,
    /// (normalized token sequence, canonical value)
    phrases: Vec<(Vec<String>, String)>,
}

impl Lexicon {
    fn new(def: &EntityDef) -> Self {
        let mut phrases = Vec::new();
        for v in &def.values {
            for text in std::iter::once(&v.value).chain(&v.synonyms) {
                let words: Vec<String> = tokenize(text)
                    .unwrap_or_default()
                    .into_iter()
                    .map(|t| t.normalized)
                    .collect();
                if !words.is_empty() {
                    phrases.push((words, v.value.clone()));
                }
            }
        }
        Lexicon {
            entity: def.name.clone(),
            fuzzy: def.fuzzy,
            phrases,
        }
    }
}

/// Longest-first n-gram lookup. A token used by a match of an entity is not
/// reused by a shorter match of the same entity.
fn dictionary_matches(tokens: &[Token], lex: &Lexicon) -> Vec<EntityMention> {
    let max_n = lex.phrases.iter().map(|(w, _)| w.len()).max().unwrap_or(0);
    let mut used = vec![false; tokens.len()];
    let mut out = Vec::new();
    for n in (1..=max_n.min(tokens.len())).rev() {
        for i in 0..=tokens.len() - n {
            if used[i..i + n].iter().any(|&u| u) {
                continue;
            }
            let window = &tokens[i..i + n];
            let hit = lex.phrases.iter().find(|(words, _)| {
                words.len() == n && words.iter().zip(window).all(|(w, t)| *w == t.normalized)
            });
            if let Some((_, value)) = hit {
                used[i..i + n].iter_mut().for_each(|u| *u = true);
                out.push(EntityMention {
                    entity: lex.entity.clone(),
                    value: value.clone(),
                    start: window[0].start,
                    end: window[n - 1].end,
                    confidence: 1.0,
                    recognizer: RecognizerKind::Dictionary,
                    system: None,
                });
            }
        }
    }
    out.sort_by_key(|m| m.start);
    out
}

pub fn fuzzy_allowance(token_len: usize) -> usize {
    match token_len {
        0..=3 => 0,
        4..=7 => 1,
        _ => 2,
    }
}

/// Near-miss single-token matches; exact hits belong to the dictionary
/// recognizer. Confidence is `1 - distance / len(value)`.
fn fuzzy_matches(tokens: &[Token], lex: &Lexicon) -> Vec<EntityMention> {
    let mut out = Vec::new();
    for token in tokens {
        let allowance = fuzzy_allowance(token.normalized.chars().count());
        if allowance == 0 {
            continue;
        }
        let best = lex
            .phrases
            .iter()
            .filter(|(words, _)| words.len() == 1)
            .map(|(words, value)| (levenshtein(&token.normalized, &words[0]), &words[0], value))
            .filter(|(d, _, _)| *d <= allowance)
            .min_by_key(|(d, _, _)| *d);
        if let Some((distance, word, value)) = best {
            if distance == 0 {
                continue;
            }
            out.push(EntityMention {
                entity: lex.entity.clone(),
                value: value.clone(),
                start: token.start,
                end: token.end,
                confidence: 1.0 - distance as f64 / word.chars().count() as f64,
                recognizer: RecognizerKind::Fuzzy,
                system: None,
            });
        }
    }
    out
}

pub fn recognize_dictionary(tokens: &[Token], defs: &[EntityDef]) -> Vec<EntityMention> {
    defs.iter()
        .filter(|d| d.kind == EntityKind::Dictionary)
        .flat_map(|d| dictionary_matches(tokens, &Lexicon::new(d)))
        .collect()
}

pub fn recognize_fuzzy(tokens: &[Token], defs: &[EntityDef]) -> Vec<EntityMention> {
    defs.iter()
        .filter(|d| d.kind == EntityKind::Dictionary && d.fuzzy)
        .flat_map(|d| fuzzy_matches(tokens, &Lexicon::new(d)))
        .collect()
}

#[derive(Debug, Clone)]
struct CompiledPatterns {
    entity: String,
    patterns: Vec<Regex>,
}

fn pattern_matches(utterance: &str, compiled: &CompiledPatterns) -> Vec<EntityMention> {
    let mut out = Vec::new();
    for re in &compiled.patterns {
        for m in re.find_iter(utterance) {
            if m.as_str().is_empty() {
                continue;
            }
            let start = utterance[..m.start()].chars().count();
            out.push(EntityMention {
                entity: compiled.entity.clone(),
                value: m.as_str().to_string(),
                start,
                end: start + m.as_str().chars().count(),
                confidence: 1.0,
                recognizer: RecognizerKind::Pattern,
                system: None,
            });
        }
    }
    out
}

/// Compiles each pattern entity's expressions. Patterns that fail to compile
/// are rejected by skill validation, so here they are skipped.
fn compile_patterns(defs: &[EntityDef]) -> Vec<CompiledPatterns> {
    defs.iter()
        .filter(|d| d.kind == EntityKind::Pattern)
        .map(|d| CompiledPatterns {
            entity: d.name.clone(),
            patterns: d
                .patterns
                .iter()
                .filter_map(|p| Regex::new(p).ok())
                .collect(),
        })
        .collect()
}

pub fn recognize_pattern(utterance: &str, defs: &[EntityDef]) -> Vec<EntityMention> {
    compile_patterns(defs)
        .iter()
        .flat_map(|c| pattern_matches(utterance, c))
        .collect()
}

fn priority(a: &EntityMention, b: &EntityMention) -> Ordering {
    b.span_len()
        .cmp(&a.span_len())
        .then(b.confidence.total_cmp(&a.confidence))
        .then(a.recognizer.precedence().cmp(&b.recognizer.precedence()))
        .then(a.start.cmp(&b.start))
}

/// Greedy non-overlapping selection: longer span, then higher confidence,
/// then recognizer precedence, then leftmost. Output sorted by start.
pub fn resolve_overlaps(mentions: Vec<EntityMention>) -> Vec<EntityMention> {
    let mut candidates = mentions;
    candidates.sort_by(priority);
    let mut kept: Vec<EntityMention> = Vec::new();
    for m in candidates {
        if kept.iter().all(|k| !k.overlaps(&m)) {
            kept.push(m);
        }
    }
    kept.sort_by_key(|m| (m.start, m.end));
    kept
}

/// All recognizers prepared for one skill.
#[derive(Debug, Clone)]
pub struct EntityRecognizer {
    lexicons: Vec<Lexicon>,
    patterns: Vec<CompiledPatterns>,
    tagger: Option<ContextualTagger>,
}

impl EntityRecognizer {
    pub fn new(skill: &Skill) -> Self {
        EntityRecognizer {
            lexicons: skill
                .entities
                .iter()
                .filter(|d| d.kind == EntityKind::Dictionary)
                .map(Lexicon::new)
                .collect(),
            patterns: compile_patterns(&skill.entities),
            tagger: ContextualTagger::train(skill),
        }
    }

    pub fn tagger(&self) -> Option<&ContextualTagger> {
        self.tagger.as_ref()
    }

    /// Runs every recognizer and merges the results. `tokens` may carry
    /// autocorrections; pattern matching always sees the raw utterance.
    pub fn recognize(
        &self,
        utterance: &str,
        tokens: &[Token],
        reference: NaiveDateTime,
    ) -> Vec<EntityMention> {
        let mut all = Vec::new();
        for c in &self.patterns {
            all.extend(pattern_matches(utterance, c));
        }
        for lex in &self.lexicons {
            all.extend(dictionary_matches(tokens, lex));
            if lex.fuzzy {
                all.extend(fuzzy_matches(tokens, lex));
            }
        }
        all.extend(recognize_system(tokens, reference));
        if let Some(tagger) = &self.tagger {
            all.extend(tagger.recognize(tokens));
        }
        resolve_overlaps(all)
    }
}
