//! Tokenization, edit distance, Soundex and vocabulary-driven autocorrection.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::skill::Skill;

/// Maximum utterance length, in characters.
pub const MAX_INPUT_CHARS: usize = 2048;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TextError {
    #[error("input is {0} characters, limit is {MAX_INPUT_CHARS}")]
    InputTooLong(usize),
    #[error("'{0}' has no ASCII letter to encode")]
    NotEncodable(String),
}

#[derive(Debug, Error)]
pub enum WordlistError {
    #[error("reading wordlist: {0}")]
    Io(#[from] std::io::Error),
    #[error("wordlist line {line}: {message}")]
    Format { line: usize, message: String },
}

/// A word of the utterance. `start`/`end` are character offsets into the
/// original text, `end` exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Token {
    pub surface: String,
    pub normalized: String,
    pub start: usize,
    pub end: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corrected_from: Option<String>,
}

impl Token {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

fn is_prefix_symbol(c: char) -> bool {
    matches!(c, '$' | '€' | '£' | '#' | '@')
}

fn is_connector(c: char) -> bool {
    matches!(c, ':' | '.' | '/' | '-' | '\'' | '’')
}

/// Splits on whitespace and punctuation. Currency, hash and at signs survive
/// as word prefixes, as does a sign directly before a digit; `: . / -` and
/// apostrophes survive between alphanumerics (`5:30`, `2024-01-05`, `can't`).
pub fn tokenize(text: &str) -> Result<Vec<Token>, TextError> {
    let chars: Vec<char> = text.chars().collect();
    if chars.len() > MAX_INPUT_CHARS {
        return Err(TextError::InputTooLong(chars.len()));
    }
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let next_alnum = chars.get(i + 1).is_some_and(|c| c.is_alphanumeric());
        let next_digit = chars.get(i + 1).is_some_and(|c| c.is_ascii_digit());
        let prev_boundary = i == 0 || !chars[i - 1].is_alphanumeric();
        let starts = c.is_alphanumeric()
            || (is_prefix_symbol(c) && next_alnum)
            || ((c == '-' || c == '+') && next_digit && prev_boundary);
        if !starts {
            i += 1;
            continue;
        }
        let start = i;
        i += 1;
        while i < chars.len() {
            let c = chars[i];
            let joins = is_connector(c)
                && chars[i - 1].is_alphanumeric()
                && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
            if c.is_alphanumeric() || joins {
                i += 1;
            } else {
                break;
            }
        }
        let surface: String = chars[start..i].iter().collect();
        tokens.push(Token {
            normalized: surface.to_lowercase(),
            surface,
            start,
            end: i,
            corrected_from: None,
        });
    }
    Ok(tokens)
}

/// Lowercased tokens joined by single spaces.
pub fn normalize_phrase(text: &str) -> String {
    match tokenize(text) {
        Ok(tokens) => join_normalized(&tokens),
        Err(_) => text
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase(),
    }
}

pub fn join_normalized(tokens: &[Token]) -> String {
    tokens
        .iter()
        .map(|t| t.normalized.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Substring by character offsets.
pub fn char_slice(text: &str, start: usize, end: usize) -> String {
    text.chars()
        .skip(start)
        .take(end.saturating_sub(start))
        .collect()
}

/// Unit-cost insert/delete/substitute distance over characters.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn soundex_digit(c: char) -> Option<char> {
    Some(match c {
        'b' | 'f' | 'p' | 'v' => '1',
        'c' | 'g' | 'j' | 'k' | 'q' | 's' | 'x' | 'z' => '2',
        'd' | 't' => '3',
        'l' => '4',
        'm' | 'n' => '5',
        'r' => '6',
        _ => return None,
    })
}

/// American Soundex: first letter plus three digits.
pub fn phonetic_code(word: &str) -> Result<String, TextError> {
    let letters: Vec<char> = word
        .chars()
        .filter(char::is_ascii_alphabetic)
        .map(|c| c.to_ascii_lowercase())
        .collect();
    let Some(&first) = letters.first() else {
        return Err(TextError::NotEncodable(word.to_string()));
    };
    let mut code = String::with_capacity(4);
    code.push(first.to_ascii_uppercase());
    let mut last = soundex_digit(first);
    for &c in &letters[1..] {
        if code.len() == 4 {
            break;
        }
        match soundex_digit(c) {
            Some(d) if Some(d) != last => {
                code.push(d);
                last = Some(d);
            }
            Some(_) => {}
            // h and w do not separate equal codes; vowels do.
            None if c == 'h' || c == 'w' => {}
            None => last = None,
        }
    }
    while code.len() < 4 {
        code.push('0');
    }
    Ok(code)
}

/// Known words with frequencies, plus a Soundex index over them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    entries: BTreeMap<String, u64>,
    phonetic_index: BTreeMap<String, BTreeSet<String>>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Words from intent examples and entity values/synonyms.
    pub fn from_skill(skill: &Skill) -> Self {
        let mut vocab = Vocabulary::new();
        let phrases = skill
            .intents
            .iter()
            .flat_map(|i| i.examples.iter().map(|e| e.text.as_str()))
            .chain(skill.entities.iter().flat_map(|e| {
                e.values.iter().flat_map(|v| {
                    std::iter::once(v.value.as_str()).chain(v.synonyms.iter().map(String::as_str))
                })
            }));
        for phrase in phrases {
            for token in tokenize(phrase).unwrap_or_default() {
                vocab.add(&token.normalized, 1);
            }
        }
        vocab
    }

    pub fn add(&mut self, word: &str, count: u64) {
        if word.is_empty() || count == 0 {
            return;
        }
        let word = word.to_lowercase();
        if let Ok(code) = phonetic_code(&word) {
            self.phonetic_index
                .entry(code)
                .or_default()
                .insert(word.clone());
        }
        *self.entries.entry(word).or_insert(0) += count;
    }

    /// Adds `word<TAB>frequency` lines; `#` lines and blank lines are skipped.
    pub fn extend_from_wordlist(&mut self, text: &str) -> Result<(), WordlistError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let format_err = |message: &str| WordlistError::Format {
                line: n + 1,
                message: message.to_string(),
            };
            let (word, freq) = line
                .split_once('\t')
                .ok_or_else(|| format_err("expected word<TAB>frequency"))?;
            let freq: u64 = freq
                .trim()
                .parse()
                .map_err(|_| format_err("frequency is not a positive integer"))?;
            if freq == 0 {
                return Err(format_err("frequency must be at least 1"));
            }
            self.add(word.trim(), freq);
        }
        Ok(())
    }

    pub fn load_wordlist(&mut self, path: &Path) -> Result<(), WordlistError> {
        let text = std::fs::read_to_string(path)?;
        self.extend_from_wordlist(&text)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn frequency(&self, word: &str) -> Option<u64> {
        self.entries.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = (&str, u64)> {
        self.entries.iter().map(|(w, f)| (w.as_str(), *f))
    }

    pub fn phonetic_matches(&self, code: &str) -> Option<&BTreeSet<String>> {
        self.phonetic_index.get(code)
    }

    /// Best in-vocabulary replacement for an unknown word, if any lies within
    /// the length-dependent distance cap.
    pub fn best_correction(&self, word: &str) -> Option<&str> {
        let len = word.chars().count();
        if len < 3 || word.chars().any(|c| c.is_ascii_digit()) || self.contains(word) {
            return None;
        }
        let max_distance = if len <= 4 { 1 } else { 2 };
        let code = phonetic_code(word).ok();
        self.entries
            .iter()
            .filter(|(w, _)| w.chars().count().abs_diff(len) <= max_distance)
            .filter_map(|(w, &freq)| {
                let d = levenshtein(word, w);
                (d <= max_distance).then_some((w.as_str(), d, freq))
            })
            .min_by(|a, b| {
                let phonetic = |w: &str| {
                    code.as_ref().is_some_and(|c| {
                        self.phonetic_index
                            .get(c)
                            .is_some_and(|set| set.contains(w))
                    })
                };
                a.1.cmp(&b.1)
                    .then(b.2.cmp(&a.2))
                    .then(phonetic(b.0).cmp(&phonetic(a.0)))
                    .then(a.0.cmp(b.0))
            })
            .map(|(w, _, _)| w)
    }
}

/// Replaces unknown words with their closest vocabulary entry. Tokens with
/// digits, tokens shorter than three characters, known words and words with
/// no candidate in range pass through untouched.
pub fn autocorrect(tokens: &[Token], vocab: &Vocabulary) -> Vec<Token> {
    tokens
        .iter()
        .map(|token| match vocab.best_correction(&token.normalized) {
            Some(word) => Token {
                surface: word.to_string(),
                normalized: word.to_string(),
                start: token.start,
                end: token.end,
                corrected_from: Some(token.surface.clone()),
            },
            None => token.clone(),
        })
        .collect()
}

/// The original text with corrected tokens spliced in, or `None` when no
/// correction fired.
pub fn corrected_text(original: &str, tokens: &[Token]) -> Option<String> {
    if tokens.iter().all(|t| t.corrected_from.is_none()) {
        return None;
    }
    let chars: Vec<char> = original.chars().collect();
    let mut out = String::with_capacity(original.len());
    let mut pos = 0;
    for token in tokens.iter().filter(|t| t.corrected_from.is_some()) {
        out.extend(&chars[pos..token.start]);
        out.push_str(&token.surface);
        pos = token.end;
    }
    out.extend(&chars[pos..]);
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(text: &str) -> Vec<String> {
        tokenize(text)
            .unwrap()
            .into_iter()
            .map(|t| t.normalized)
            .collect()
    }

    #[test]
    fn tokenize_contraction_utterance() {
        assert_eq!(words("I can't log in"), ["i", "can't", "log", "in"]);
        assert!(tokenize("").unwrap().is_empty());
        assert!(tokenize("  \t ").unwrap().is_empty());
    }

    #[test]
    fn tokenize_keeps_structured_words() {
        let text = "remind me at 5:30 pm!";
        let tokens = tokenize(text).unwrap();
        assert_eq!(words(text), ["remind", "me", "at", "5:30", "pm"]);
        for t in &tokens {
            assert_eq!(char_slice(text, t.start, t.end), t.surface);
        }
        assert_eq!((tokens[3].start, tokens[3].end), (13, 17));
        assert_eq!(
            words("on 2024-01-05, pay $20."),
            ["on", "2024-01-05", "pay", "$20"]
        );
        assert_eq!(
            words("(#tag) @you €5 £3.50"),
            ["#tag", "@you", "€5", "£3.50"]
        );
        assert_eq!(
            words("it's -5 degrees, a-b"),
            ["it's", "-5", "degrees", "a-b"]
        );
        assert_eq!(words("diet,workout...yes"), ["diet", "workout", "yes"]);
    }

    #[test]
    fn tokenize_length_limit() {
        let long = "a".repeat(MAX_INPUT_CHARS + 1);
        assert_eq!(
            tokenize(&long),
            Err(TextError::InputTooLong(MAX_INPUT_CHARS + 1))
        );
        assert!(tokenize(&"a".repeat(MAX_INPUT_CHARS)).is_ok());
    }

    #[test]
    fn tokenize_non_ascii_offsets() {
        let text = "café · naïve";
        let tokens = tokenize(text).unwrap();
        assert_eq!(tokens.len(), 2);
        assert_eq!(char_slice(text, tokens[1].start, tokens[1].end), "naïve");
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein("abc", "abc"), 0);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("vegann", "vegan"), 1);
    }

    #[test]
    fn soundex_examples() {
        assert_eq!(phonetic_code("Robert").unwrap(), "R163");
        assert_eq!(phonetic_code("Rupert").unwrap(), "R163");
        assert_eq!(phonetic_code("a").unwrap(), "A000");
        assert_eq!(phonetic_code("Ashcraft").unwrap(), "A261");
        assert_eq!(phonetic_code("Tymczak").unwrap(), "T522");
        assert_eq!(phonetic_code("Pfister").unwrap(), "P236");
        assert_eq!(phonetic_code("Honeyman").unwrap(), "H555");
        assert!(matches!(
            phonetic_code("123"),
            Err(TextError::NotEncodable(_))
        ));
    }

    fn vocab(entries: &[(&str, u64)]) -> Vocabulary {
        let mut v = Vocabulary::new();
        for (w, f) in entries {
            v.add(w, *f);
        }
        v
    }

    #[test]
    fn autocorrect_password_misspelling() {
        let v = vocab(&[("password", 3), ("doesnt", 1), ("work", 2)]);
        let text = "passwrd doesnt work";
        let fixed = autocorrect(&tokenize(text).unwrap(), &v);
        assert_eq!(join_normalized(&fixed), "password doesnt work");
        assert_eq!(fixed[0].corrected_from.as_deref(), Some("passwrd"));
        assert_eq!(fixed[1].corrected_from, None);
        assert_eq!(
            corrected_text(text, &fixed).as_deref(),
            Some("password doesnt work")
        );
    }

    #[test]
    fn autocorrect_tie_breaks_on_frequency() {
        let v = vocab(&[("plan", 5), ("plon", 1)]);
        let fixed = autocorrect(&tokenize("pln").unwrap(), &v);
        assert_eq!(fixed[0].normalized, "plan");
    }

    #[test]
    fn autocorrect_tie_breaks_on_phonetics_then_lexicographic() {
        // bouk and bouq share B200; boul is B400 and sorts first.
        let v = vocab(&[("boul", 1), ("bouq", 1)]);
        assert_eq!(v.best_correction("bouk"), Some("bouq"));
        let v = vocab(&[("cat", 1), ("bat", 1)]);
        // Neither shares "hat"'s code, so lexicographic order decides.
        assert_eq!(v.best_correction("hat"), Some("bat"));
    }

    #[test]
    fn autocorrect_leaves_protected_tokens() {
        let v = vocab(&[("plan", 5), ("at", 1), ("5pm", 1)]);
        let tokens = tokenize("pl 5pn plan zzzzzz").unwrap();
        assert_eq!(autocorrect(&tokens, &v), tokens);
    }

    #[test]
    fn wordlist_parsing() {
        let mut v = Vocabulary::new();
        v.extend_from_wordlist("# comment\nyoga\t10\n\nstretch\t2\n")
            .unwrap();
        assert_eq!(v.frequency("yoga"), Some(10));
        assert!(v.phonetic_matches("Y200").unwrap().contains("yoga"));
        assert!(matches!(
            v.extend_from_wordlist("oops"),
            Err(WordlistError::Format { line: 1, .. })
        ));
        assert!(v.extend_from_wordlist("x\t0").is_err());
    }
}
