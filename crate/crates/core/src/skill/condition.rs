//! Dialog node condition language.
//!
//! ```text
//! expr  := and ("||" and)*
//! and   := unary ("&&" unary)*
//! unary := "!" unary | atom
//! atom  := "(" expr ")" | "#"IDENT | "@"IDENT(":"VALUE)? | "$"IDENT (CMP literal)?
//!        | "true" | "anything_else"
//! ```
//!
//! `&&` binds tighter than `||`. A bare `$var` tests that the variable is
//! defined and neither null nor false.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("condition syntax error at {position}: {message}")]
pub struct ConditionSyntaxError {
    /// Character offset into the condition text.
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn is_ordering(self) -> bool {
        matches!(self, CmpOp::Lt | CmpOp::Le | CmpOp::Gt | CmpOp::Ge)
    }
}

/// Right-hand side of a variable comparison.
#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Null,
    Bool(bool),
    Number(f64),
    Str(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum VarTest {
    /// Bare `$var`.
    Truthy,
    Compare(CmpOp, Literal),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    True,
    AnythingElse,
    IntentIs(String),
    EntityPresent {
        entity: String,
        value: Option<String>,
    },
    Var {
        name: String,
        test: VarTest,
    },
    Not(Box<Condition>),
    And(Box<Condition>, Box<Condition>),
    Or(Box<Condition>, Box<Condition>),
}

impl Condition {
    /// Visits every node of the tree, parents before children.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Condition)) {
        f(self);
        match self {
            Condition::Not(inner) => inner.walk(f),
            Condition::And(l, r) | Condition::Or(l, r) => {
                l.walk(f);
                r.walk(f);
            }
            _ => {}
        }
    }

    /// True if `anything_else` appears anywhere below the root.
    pub fn has_nested_anything_else(&self) -> bool {
        if matches!(self, Condition::AnythingElse) {
            return false;
        }
        let mut found = false;
        self.walk(&mut |c| found |= matches!(c, Condition::AnythingElse));
        found
    }

    /// Renders the condition with every binary and unary operator fully
    /// parenthesized.
    pub fn to_parenthesized(&self) -> String {
        match self {
            Condition::Not(inner) => format!("(!{})", inner.to_parenthesized()),
            Condition::And(l, r) => {
                format!("({} && {})", l.to_parenthesized(), r.to_parenthesized())
            }
            Condition::Or(l, r) => {
                format!("({} || {})", l.to_parenthesized(), r.to_parenthesized())
            }
            atom => atom.to_string(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Condition::Or(..) => 1,
            Condition::And(..) => 2,
            Condition::Not(..) => 3,
            _ => 4,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

/// Identifiers in `#`, `@` and `$` atoms.
pub(crate) fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn is_bare_value_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '.')
}

fn is_bare_word(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(is_bare_value_char)
        && !matches!(s, "true" | "false" | "null")
        && s.parse::<f64>().is_err()
        && !s.starts_with(|c: char| c == '-' || c == '.' || c.is_ascii_digit())
}

fn write_quoted(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Null => f.write_str("null"),
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Number(n) => write!(f, "{n}"),
            Literal::Str(s) if is_bare_word(s) => f.write_str(s),
            Literal::Str(s) => write_quoted(f, s),
        }
    }
}

impl fmt::Display for Condition {
    /// Minimal-parenthesis rendering; reparsing yields the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::True => f.write_str("true"),
            Condition::AnythingElse => f.write_str("anything_else"),
            Condition::IntentIs(name) => write!(f, "#{name}"),
            Condition::EntityPresent { entity, value } => {
                write!(f, "@{entity}")?;
                match value {
                    None => Ok(()),
                    Some(v) if v.chars().all(is_bare_value_char) && !v.is_empty() => {
                        write!(f, ":{v}")
                    }
                    Some(v) => {
                        f.write_str(":")?;
                        write_quoted(f, v)
                    }
                }
            }
            Condition::Var { name, test } => match test {
                VarTest::Truthy => write!(f, "${name}"),
                VarTest::Compare(op, lit) => write!(f, "${name} {} {lit}", op.symbol()),
            },
            Condition::Not(inner) => {
                f.write_str("!")?;
                inner.fmt_child(f, 3)
            }
            // Left-associative chains print flat; a right-nested operand of
            // the same operator keeps its parentheses.
            Condition::And(l, r) => {
                l.fmt_child(f, 2)?;
                f.write_str(" && ")?;
                r.fmt_child(f, 3)
            }
            Condition::Or(l, r) => {
                l.fmt_child(f, 1)?;
                f.write_str(" || ")?;
                r.fmt_child(f, 2)
            }
        }
    }
}

impl Serialize for Condition {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Condition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_condition(&text).map_err(serde::de::Error::custom)
    }
}

impl std::str::FromStr for Condition {
    type Err = ConditionSyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_condition(s)
    }
}

pub fn parse_condition(text: &str) -> Result<Condition, ConditionSyntaxError> {
    let mut parser = Parser {
        chars: text.chars().collect(),
        pos: 0,
    };
    parser.skip_ws();
    if parser.at_end() {
        return Err(parser.error("empty condition"));
    }
    let expr = parser.expr()?;
    parser.skip_ws();
    if !parser.at_end() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(expr)
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn error(&self, message: impl Into<String>) -> ConditionSyntaxError {
        ConditionSyntaxError {
            position: self.pos,
            message: message.into(),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        let n = s.chars().count();
        if self.chars.len() >= self.pos + n
            && self.chars[self.pos..self.pos + n]
                .iter()
                .copied()
                .eq(s.chars())
        {
            self.pos += n;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Condition, ConditionSyntaxError> {
        let mut lhs = self.and()?;
        while self.eat("||") {
            let rhs = self.and()?;
            lhs = Condition::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Condition, ConditionSyntaxError> {
        let mut lhs = self.unary()?;
        while self.eat("&&") {
            let rhs = self.unary()?;
            lhs = Condition::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Condition, ConditionSyntaxError> {
        self.skip_ws();
        if self.peek() == Some('!') && self.chars.get(self.pos + 1) != Some(&'=') {
            self.pos += 1;
            return Ok(Condition::Not(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn ident(&mut self) -> Result<String, ConditionSyntaxError> {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
        {
            self.pos += 1;
        }
        let word: String = self.chars[start..self.pos].iter().collect();
        if is_ident(&word) {
            Ok(word)
        } else {
            self.pos = start;
            Err(self.error("expected identifier matching [a-z][a-z0-9_]*"))
        }
    }

    fn quoted(&mut self) -> Result<String, ConditionSyntaxError> {
        let quote = self.peek().expect("caller checked quote");
        self.pos += 1;
        let mut out = String::new();
        loop {
            match self.peek() {
                None => return Err(self.error("unterminated string")),
                Some('\\') => {
                    self.pos += 1;
                    match self.peek() {
                        Some(c) => {
                            out.push(c);
                            self.pos += 1;
                        }
                        None => return Err(self.error("unterminated escape")),
                    }
                }
                Some(c) if c == quote => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some(c) => {
                    out.push(c);
                    self.pos += 1;
                }
            }
        }
    }

    fn bare(&mut self) -> String {
        let start = self.pos;
        while self.peek().is_some_and(is_bare_value_char) {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn atom(&mut self) -> Result<Condition, ConditionSyntaxError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("unexpected end of condition")),
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(")") {
                    return Err(self.error("expected ')'"));
                }
                Ok(inner)
            }
            Some('#') => {
                self.pos += 1;
                Ok(Condition::IntentIs(self.ident()?))
            }
            Some('@') => {
                self.pos += 1;
                let entity = self.ident()?;
                let value = if self.peek() == Some(':') {
                    self.pos += 1;
                    Some(self.entity_value()?)
                } else {
                    None
                };
                Ok(Condition::EntityPresent { entity, value })
            }
            Some('$') => {
                self.pos += 1;
                let name = self.ident()?;
                let test = match self.cmp_op() {
                    Some(op) => VarTest::Compare(op, self.literal()?),
                    None => VarTest::Truthy,
                };
                Ok(Condition::Var { name, test })
            }
            Some(_) => {
                let word = self.bare();
                match word.as_str() {
                    "true" => Ok(Condition::True),
                    "anything_else" => Ok(Condition::AnythingElse),
                    "" => Err(self.error("unexpected character")),
                    _ => {
                        self.pos -= word.chars().count();
                        Err(self.error(format!("unknown atom '{word}'")))
                    }
                }
            }
        }
    }

    fn entity_value(&mut self) -> Result<String, ConditionSyntaxError> {
        match self.peek() {
            Some('"') | Some('\'') => self.quoted(),
            Some('(') => {
                self.pos += 1;
                let start = self.pos;
                while self.peek().is_some_and(|c| c != ')') {
                    self.pos += 1;
                }
                if self.at_end() {
                    return Err(self.error("expected ')' after entity value"));
                }
                let value: String = self.chars[start..self.pos].iter().collect();
                self.pos += 1;
                Ok(value.trim().to_string())
            }
            _ => {
                let value = self.bare();
                if value.is_empty() {
                    Err(self.error("expected entity value after ':'"))
                } else {
                    Ok(value)
                }
            }
        }
    }

    fn cmp_op(&mut self) -> Option<CmpOp> {
        // Longest operators first.
        for (text, op) in [
            ("==", CmpOp::Eq),
            ("!=", CmpOp::Ne),
            ("<=", CmpOp::Le),
            (">=", CmpOp::Ge),
            ("<", CmpOp::Lt),
            (">", CmpOp::Gt),
        ] {
            let save = self.pos;
            if self.eat(text) {
                return Some(op);
            }
            self.pos = save;
        }
        None
    }

    fn literal(&mut self) -> Result<Literal, ConditionSyntaxError> {
        self.skip_ws();
        match self.peek() {
            Some('"') | Some('\'') => Ok(Literal::Str(self.quoted()?)),
            _ => {
                let start = self.pos;
                if self.peek() == Some('-') || self.peek() == Some('+') {
                    self.pos += 1;
                }
                let word = format!(
                    "{}{}",
                    self.chars[start..self.pos].iter().collect::<String>(),
                    self.bare()
                );
                match word.as_str() {
                    "" => Err(self.error("expected literal")),
                    "true" => Ok(Literal::Bool(true)),
                    "false" => Ok(Literal::Bool(false)),
                    "null" => Ok(Literal::Null),
                    w => match w.parse::<f64>() {
                        Ok(n) if n.is_finite() => Ok(Literal::Number(n)),
                        _ if is_bare_word(w) => Ok(Literal::Str(w.to_string())),
                        _ => {
                            self.pos = start;
                            Err(self.error(format!("invalid literal '{w}'")))
                        }
                    },
                }
            }
        }
    }
}
