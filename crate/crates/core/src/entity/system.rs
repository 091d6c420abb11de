//! Grammar for built-in entities: numbers, currency amounts, times, dates
//! and numeric ranges. All relative dates resolve against a caller-supplied
//! reference instant; nothing here reads a clock.

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Weekday};
use serde::{Deserialize, Serialize};

use super::{EntityMention, RecognizerKind};
use crate::text::Token;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurrencyCode {
    #[serde(rename = "USD")]
    Usd,
    #[serde(rename = "EUR")]
    Eur,
    #[serde(rename = "GBP")]
    Gbp,
}

impl CurrencyCode {
    pub fn as_str(self) -> &'static str {
        match self {
            CurrencyCode::Usd => "USD",
            CurrencyCode::Eur => "EUR",
            CurrencyCode::Gbp => "GBP",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemValue {
    Date { date: NaiveDate },
    Time { hour: u32, minute: u32 },
    Number { value: f64 },
    Currency { amount: f64, code: CurrencyCode },
    Range { low: f64, high: f64 },
}

impl SystemValue {
    pub fn entity_name(&self) -> &'static str {
        match self {
            SystemValue::Date { .. } => "sys_date",
            SystemValue::Time { .. } => "sys_time",
            SystemValue::Number { .. } => "sys_number",
            SystemValue::Currency { .. } => "sys_currency",
            SystemValue::Range { .. } => "sys_range",
        }
    }

    /// Display form used as the mention value.
    pub fn render(&self) -> String {
        match self {
            SystemValue::Date { date } => date.format("%Y-%m-%d").to_string(),
            SystemValue::Time { hour, minute } => format!("{hour:02}:{minute:02}"),
            SystemValue::Number { value } => format_decimal(*value),
            SystemValue::Currency { amount, code } => {
                format!("{} {}", format_decimal(*amount), code.as_str())
            }
            SystemValue::Range { low, high } => {
                format!("{}..{}", format_decimal(*low), format_decimal(*high))
            }
        }
    }
}

/// Integers print without a fractional part.
pub fn format_decimal(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

const UNITS: [&str; 20] = [
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
];
const TENS: [&str; 8] = [
    "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];
const MONTHS: [&str; 12] = [
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
];
const WEEKDAYS: [(&str, Weekday); 7] = [
    ("monday", Weekday::Mon),
    ("tuesday", Weekday::Tue),
    ("wednesday", Weekday::Wed),
    ("thursday", Weekday::Thu),
    ("friday", Weekday::Fri),
    ("saturday", Weekday::Sat),
    ("sunday", Weekday::Sun),
];

fn unit_value(word: &str) -> Option<u32> {
    UNITS.iter().position(|u| *u == word).map(|p| p as u32)
}

fn tens_value(word: &str) -> Option<u32> {
    TENS.iter()
        .position(|t| *t == word)
        .map(|p| 20 + 10 * p as u32)
}

fn parse_numeric(word: &str) -> Option<f64> {
    let digits = word.strip_prefix(['-', '+']).unwrap_or(word);
    let mut parts = digits.splitn(2, '.');
    let int = parts.next()?;
    let frac = parts.next();
    let all_digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !all_digits(int) || frac.is_some_and(|f| !all_digits(f)) {
        return None;
    }
    word.parse().ok()
}

/// A single word number such as "seven", "forty" or "twenty-one".
fn word_number(word: &str) -> Option<u32> {
    if let Some(v) = unit_value(word).or_else(|| tens_value(word)) {
        return Some(v);
    }
    let (tens, unit) = word.split_once('-')?;
    let (t, u) = (tens_value(tens)?, unit_value(unit)?);
    (1..=9).contains(&u).then_some(t + u)
}

fn word(tokens: &[Token], i: usize) -> Option<&str> {
    tokens.get(i).map(|t| t.normalized.as_str())
}

/// Number starting at token `i`: (tokens consumed, value).
fn number_at(tokens: &[Token], i: usize) -> Option<(usize, f64)> {
    let w = word(tokens, i)?;
    if let Some(v) = parse_numeric(w) {
        return Some((1, v));
    }
    if let Some(t) = tens_value(w) {
        if let Some(u) = word(tokens, i + 1).and_then(unit_value) {
            if (1..=9).contains(&u) {
                return Some((2, (t + u) as f64));
            }
        }
    }
    word_number(w).map(|v| (1, v as f64))
}

fn currency_word(w: &str) -> Option<CurrencyCode> {
    Some(match w {
        "dollar" | "dollars" | "usd" => CurrencyCode::Usd,
        "euro" | "euros" | "eur" => CurrencyCode::Eur,
        "pound" | "pounds" | "gbp" => CurrencyCode::Gbp,
        _ => return None,
    })
}

fn currency_at(tokens: &[Token], i: usize) -> Option<(usize, SystemValue)> {
    let w = word(tokens, i)?;
    let mut chars = w.chars();
    let code = match chars.next()? {
        '$' => Some(CurrencyCode::Usd),
        '€' => Some(CurrencyCode::Eur),
        '£' => Some(CurrencyCode::Gbp),
        _ => None,
    };
    if let Some(code) = code {
        let amount = parse_numeric(chars.as_str())?;
        return Some((1, SystemValue::Currency { amount, code }));
    }
    let (n, amount) = number_at(tokens, i)?;
    let code = currency_word(word(tokens, i + n)?)?;
    Some((n + 1, SystemValue::Currency { amount, code }))
}

fn meridiem(w: &str) -> Option<bool> {
    match w {
        "am" | "a.m" => Some(false),
        "pm" | "p.m" => Some(true),
        _ => None,
    }
}

fn clock_12(hour: u32, minute: u32, pm: bool) -> Option<SystemValue> {
    if !(1..=12).contains(&hour) || minute > 59 {
        return None;
    }
    let hour = match (hour, pm) {
        (12, false) => 0,
        (12, true) => 12,
        (h, true) => h + 12,
        (h, false) => h,
    };
    Some(SystemValue::Time { hour, minute })
}

fn split_clock(w: &str) -> Option<(u32, Option<u32>)> {
    let (h, m) = match w.split_once(':') {
        Some((h, m)) => (h, Some(m)),
        None => (w, None),
    };
    let digits = |s: &str, max_len: usize| {
        !s.is_empty() && s.len() <= max_len && s.bytes().all(|b| b.is_ascii_digit())
    };
    if !digits(h, 2) || m.is_some_and(|m| !(m.len() == 2 && digits(m, 2))) {
        return None;
    }
    Some((h.parse().ok()?, m.map(|m| m.parse().unwrap_or(0))))
}

fn time_at(tokens: &[Token], i: usize) -> Option<(usize, SystemValue)> {
    let w = word(tokens, i)?;
    match w {
        "noon" => {
            return Some((
                1,
                SystemValue::Time {
                    hour: 12,
                    minute: 0,
                },
            ))
        }
        "midnight" => return Some((1, SystemValue::Time { hour: 0, minute: 0 })),
        _ => {}
    }
    // Glued forms: "5pm", "5:30pm".
    for (suffix, pm) in [("am", false), ("pm", true)] {
        if let Some(clock) = w.strip_suffix(suffix) {
            if let Some((h, m)) = split_clock(clock) {
                return clock_12(h, m.unwrap_or(0), pm).map(|v| (1, v));
            }
        }
    }
    let next_meridiem = word(tokens, i + 1).and_then(meridiem);
    if let Some((h, m)) = split_clock(w) {
        if let Some(pm) = next_meridiem {
            if let Some(v) = clock_12(h, m.unwrap_or(0), pm) {
                return Some((2, v));
            }
        }
        if let Some(m) = m {
            if h <= 23 && m <= 59 {
                return Some((1, SystemValue::Time { hour: h, minute: m }));
            }
        }
        return None;
    }
    let h = word_number(w)?;
    clock_12(h, 0, next_meridiem?).map(|v| (2, v))
}

fn month_value(w: &str) -> Option<u32> {
    MONTHS
        .iter()
        .position(|m| {
            *m == w || (w.len() == 3 && m.starts_with(w)) || (w == "sept" && *m == "september")
        })
        .map(|p| p as u32 + 1)
}

fn day_of_month(w: &str) -> Option<u32> {
    let digits = ["st", "nd", "rd", "th"]
        .iter()
        .find_map(|s| w.strip_suffix(s))
        .unwrap_or(w);
    if digits.is_empty() || digits.len() > 2 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let d: u32 = digits.parse().ok()?;
    (1..=31).contains(&d).then_some(d)
}

fn next_weekday(after: NaiveDate, target: Weekday) -> NaiveDate {
    let from = after.weekday().num_days_from_monday() as i64;
    let to = target.num_days_from_monday() as i64;
    let mut delta = (to - from).rem_euclid(7);
    if delta == 0 {
        delta = 7;
    }
    after + Duration::days(delta)
}

fn date_at(tokens: &[Token], i: usize, reference: NaiveDate) -> Option<(usize, SystemValue)> {
    let w = word(tokens, i)?;
    let date = |d: NaiveDate| SystemValue::Date { date: d };
    match w {
        "today" => return Some((1, date(reference))),
        "tomorrow" => return Some((1, date(reference + Duration::days(1)))),
        "yesterday" => return Some((1, date(reference - Duration::days(1)))),
        _ => {}
    }
    if let Some((_, wd)) = WEEKDAYS.iter().find(|(name, _)| *name == w) {
        return Some((1, date(next_weekday(reference, *wd))));
    }
    if w.len() == 10 && w.as_bytes()[4] == b'-' && w.as_bytes()[7] == b'-' {
        return NaiveDate::parse_from_str(w, "%Y-%m-%d")
            .ok()
            .map(|d| (1, date(d)));
    }
    let month = month_value(w)?;
    let day = day_of_month(word(tokens, i + 1)?)?;
    NaiveDate::from_ymd_opt(reference.year(), month, day).map(|d| (2, date(d)))
}

fn range_token(w: &str) -> Option<(f64, f64)> {
    let (a, b) = w.split_once('-')?;
    Some((parse_numeric(a)?, parse_numeric(b)?))
}

fn range_value(a: f64, b: f64) -> SystemValue {
    SystemValue::Range {
        low: a.min(b),
        high: a.max(b),
    }
}

fn range_at(tokens: &[Token], i: usize) -> Option<(usize, SystemValue)> {
    let w = word(tokens, i)?;
    if let Some((a, b)) = range_token(w) {
        return Some((1, range_value(a, b)));
    }
    let (offset, joiner) = match w {
        "between" => (1, "and"),
        "from" => (1, "to"),
        _ => (0, "to"),
    };
    let (na, a) = number_at(tokens, i + offset)?;
    if word(tokens, i + offset + na)? != joiner {
        return None;
    }
    let (nb, b) = number_at(tokens, i + offset + na + 1)?;
    Some((offset + na + 1 + nb, range_value(a, b)))
}

/// Every system entity in the token stream. Overlapping readings collapse to
/// the longest one, so a range hides its endpoints and a time hides its hour.
pub fn recognize_system(tokens: &[Token], reference: NaiveDateTime) -> Vec<EntityMention> {
    let today = reference.date();
    let mut candidates: Vec<(usize, usize, SystemValue)> = Vec::new();
    for i in 0..tokens.len() {
        let readings = [
            range_at(tokens, i),
            currency_at(tokens, i),
            time_at(tokens, i),
            date_at(tokens, i, today),
            number_at(tokens, i).map(|(n, v)| (n, SystemValue::Number { value: v })),
        ];
        candidates.extend(readings.into_iter().flatten().map(|(n, v)| (i, n, v)));
    }
    // Longest first, then leftmost, then the reading order above.
    candidates.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut taken = vec![false; tokens.len()];
    let mut out = Vec::new();
    for (i, n, value) in candidates {
        if taken[i..i + n].iter().any(|&t| t) {
            continue;
        }
        taken[i..i + n].iter_mut().for_each(|t| *t = true);
        out.push(EntityMention {
            entity: value.entity_name().to_string(),
            value: value.render(),
            start: tokens[i].start,
            end: tokens[i + n - 1].end,
            confidence: 1.0,
            recognizer: RecognizerKind::System,
            system: Some(value),
        });
    }
    out.sort_by_key(|m| m.start);
    out
}
