//! Boolean condition language over categorical attributes.
//!
//! ```text
//! expr  := or
//! or    := and (OR and)*
//! and   := unary (AND unary)*
//! unary := [NOT] (term | "(" expr ")")
//! term  := ident "=" quoted-string | ALL
//! ```
//!
//! Keywords are case-insensitive. `NOT` may only negate a term or a
//! disjunction of terms over a single attribute, so that it can be resolved
//! as the union of that attribute's remaining values.

use alloc::borrow::ToOwned;
use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::sets::IdSet;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("syntax error at byte {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl ParseError {
    fn new(position: usize, message: impl Into<String>) -> Self {
        ParseError {
            position,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Condition {
    All,
    Term { attribute: String, value: String },
    Not(Box<Condition>),
    And(Vec<Condition>),
    Or(Vec<Condition>),
}

impl Condition {
    pub fn term(attribute: impl Into<String>, value: impl Into<String>) -> Self {
        Condition::Term {
            attribute: attribute.into(),
            value: value.into(),
        }
    }

    /// `attribute = v1 OR attribute = v2 ...`; a single value gives a bare term.
    pub fn any_of<I, S>(attribute: &str, values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut terms: Vec<Condition> = values
            .into_iter()
            .map(|v| Condition::term(attribute, v))
            .collect();
        if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            Condition::Or(terms)
        }
    }

    /// Canonical text: lowercase keywords, operands of AND/OR flattened and
    /// sorted, single spaces. Equivalent spellings map to the same string.
    pub fn canonical(&self) -> String {
        match self {
            Condition::All => "all".to_owned(),
            Condition::Term { attribute, value } => {
                let mut s = String::with_capacity(attribute.len() + value.len() + 3);
                s.push_str(attribute);
                s.push_str("=\"");
                for c in value.chars() {
                    if c == '"' || c == '\\' {
                        s.push('\\');
                    }
                    s.push(c);
                }
                s.push('"');
                s
            }
            Condition::Not(inner) => {
                let mut s = String::from("not ");
                s.push_str(&Self::grouped(inner));
                s
            }
            Condition::And(_) | Condition::Or(_) => {
                let is_and = matches!(self, Condition::And(_));
                let mut flat = Vec::new();
                self.flatten_into(is_and, &mut flat);
                let mut parts: Vec<String> = flat.iter().map(|c| Self::grouped(c)).collect();
                parts.sort_unstable();
                parts.join(if is_and { " and " } else { " or " })
            }
        }
    }

    fn grouped(c: &Condition) -> String {
        match c {
            Condition::And(v) | Condition::Or(v) if v.len() > 1 => {
                let mut s = String::from("(");
                s.push_str(&c.canonical());
                s.push(')');
                s
            }
            _ => c.canonical(),
        }
    }

    fn flatten_into<'a>(&'a self, is_and: bool, out: &mut Vec<&'a Condition>) {
        match (self, is_and) {
            (Condition::And(v), true) | (Condition::Or(v), false) => {
                for c in v {
                    c.flatten_into(is_and, out);
                }
            }
            _ => out.push(self),
        }
    }

    /// Attribute named by a term, or shared by every term of a disjunction.
    fn single_attribute_disjunction(&self) -> Option<&str> {
        match self {
            Condition::Term { attribute, .. } => Some(attribute),
            Condition::Or(v) => {
                let mut attr = None;
                for c in v {
                    let a = c.single_attribute_disjunction()?;
                    match attr {
                        None => attr = Some(a),
                        Some(prev) if prev == a => {}
                        Some(_) => return None,
                    }
                }
                attr
            }
            _ => None,
        }
    }

    fn negatable(&self) -> bool {
        matches!(self, Condition::All) || self.single_attribute_disjunction().is_some()
    }

    /// Evaluates the condition against one record's metadata.
    pub fn matches<'a, F>(&self, lookup: &F) -> bool
    where
        F: Fn(&str) -> Option<&'a str>,
    {
        match self {
            Condition::All => true,
            Condition::Term { attribute, value } => lookup(attribute) == Some(value.as_str()),
            Condition::Not(inner) => !inner.matches(lookup),
            Condition::And(v) => v.iter().all(|c| c.matches(lookup)),
            Condition::Or(v) => v.iter().any(|c| c.matches(lookup)),
        }
    }

    /// Resolves attribute names and values against `corpus`.
    pub fn bind(&self, corpus: &Corpus) -> Result<BoundCondition> {
        Ok(BoundCondition(Bound::build(self, corpus)?))
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

impl core::str::FromStr for Condition {
    type Err = ParseError;

    fn from_str(s: &str) -> core::result::Result<Self, ParseError> {
        parse_condition(s)
    }
}

/// Condition with attributes resolved to column indices and values to codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundCondition(pub(crate) Bound);

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Bound {
    All,
    Empty,
    /// `code` is `None` when the value never occurs in the corpus.
    Term {
        attr: usize,
        code: Option<u32>,
    },
    /// Every point whose value is not among `codes`.
    NotIn {
        attr: usize,
        codes: Vec<u32>,
    },
    And(Vec<Bound>),
    Or(Vec<Bound>),
}

impl Bound {
    fn build(c: &Condition, corpus: &Corpus) -> Result<Bound> {
        let attr_of = |name: &str| {
            corpus
                .attribute_index(name)
                .ok_or_else(|| Error::UnknownAttribute(name.to_owned()))
        };
        Ok(match c {
            Condition::All => Bound::All,
            Condition::Term { attribute, value } => {
                let attr = attr_of(attribute)?;
                Bound::Term {
                    attr,
                    code: corpus.attributes()[attr].code(value),
                }
            }
            Condition::Not(inner) => {
                if !inner.negatable() {
                    return Err(Error::param(
                        "NOT applies only to a term or a disjunction of terms over one attribute",
                    ));
                }
                if matches!(**inner, Condition::All) {
                    Bound::Empty
                } else {
                    let attr = attr_of(inner.single_attribute_disjunction().unwrap())?;
                    let mut codes = Vec::new();
                    collect_codes(inner, &corpus.attributes()[attr], &mut codes);
                    codes.sort_unstable();
                    codes.dedup();
                    Bound::NotIn { attr, codes }
                }
            }
            Condition::And(v) => Bound::And(
                v.iter()
                    .map(|c| Bound::build(c, corpus))
                    .collect::<Result<_>>()?,
            ),
            Condition::Or(v) => Bound::Or(
                v.iter()
                    .map(|c| Bound::build(c, corpus))
                    .collect::<Result<_>>()?,
            ),
        })
    }

    fn members(&self, corpus: &Corpus) -> IdSet {
        let n = corpus.len();
        match self {
            Bound::All => IdSet::full(n),
            Bound::Empty | Bound::Term { code: None, .. } => IdSet::empty(n),
            Bound::Term {
                attr,
                code: Some(code),
            } => corpus.attributes()[*attr].members(*code),
            Bound::NotIn { attr, codes } => {
                let column = corpus.attributes()[*attr].codes();
                IdSet::from_ids(
                    n,
                    column
                        .iter()
                        .enumerate()
                        .filter(|(_, c)| codes.binary_search(c).is_err())
                        .map(|(i, _)| i),
                )
            }
            Bound::And(v) => {
                let mut acc = IdSet::full(n);
                for b in v {
                    acc.intersect_with(&b.members(corpus));
                }
                acc
            }
            Bound::Or(v) => {
                let mut acc = IdSet::empty(n);
                for b in v {
                    acc.union_with(&b.members(corpus));
                }
                acc
            }
        }
    }

    fn matches(&self, corpus: &Corpus, id: usize) -> bool {
        match self {
            Bound::All => true,
            Bound::Empty | Bound::Term { code: None, .. } => false,
            Bound::Term {
                attr,
                code: Some(code),
            } => corpus.attributes()[*attr].code_of(id) == *code,
            Bound::NotIn { attr, codes } => codes
                .binary_search(&corpus.attributes()[*attr].code_of(id))
                .is_err(),
            Bound::And(v) => v.iter().all(|b| b.matches(corpus, id)),
            Bound::Or(v) => v.iter().any(|b| b.matches(corpus, id)),
        }
    }
}

fn collect_codes(c: &Condition, attribute: &crate::corpus::Attribute, out: &mut Vec<u32>) {
    match c {
        Condition::Term { value, .. } => out.extend(attribute.code(value)),
        Condition::Or(v) => {
            for c in v {
                collect_codes(c, attribute, out);
            }
        }
        _ => unreachable!("checked by negatable()"),
    }
}

impl BoundCondition {
    pub fn members(&self, corpus: &Corpus) -> IdSet {
        self.0.members(corpus)
    }

    /// Evaluates the predicate on a single point.
    #[inline]
    pub fn matches(&self, corpus: &Corpus, id: usize) -> bool {
        self.0.matches(corpus, id)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Str(String),
    Eq,
    Open,
    Close,
    And,
    Or,
    Not,
    All,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> core::result::Result<Vec<(Token, usize)>, ParseError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (tok, at) = lx.next()?;
            let end = tok == Token::End;
            out.push((tok, at));
            if end {
                return Ok(out);
            }
        }
    }

    fn next(&mut self) -> core::result::Result<(Token, usize), ParseError> {
        let rest = &self.src[self.pos..];
        let trimmed = rest.trim_start();
        self.pos += rest.len() - trimmed.len();
        let start = self.pos;
        let mut chars = trimmed.chars();
        let Some(c) = chars.next() else {
            return Ok((Token::End, start));
        };
        let simple = match c {
            '=' => Some(Token::Eq),
            '(' => Some(Token::Open),
            ')' => Some(Token::Close),
            _ => None,
        };
        if let Some(t) = simple {
            self.pos += 1;
            return Ok((t, start));
        }
        if c == '"' {
            let mut value = String::new();
            let mut offset = 1;
            let mut escaped = false;
            for ch in chars {
                offset += ch.len_utf8();
                if escaped {
                    value.push(ch);
                    escaped = false;
                } else if ch == '\\' {
                    escaped = true;
                } else if ch == '"' {
                    self.pos += offset;
                    return Ok((Token::Str(value), start));
                } else {
                    value.push(ch);
                }
            }
            return Err(ParseError::new(start, "unterminated string"));
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let len = trimmed
                .find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_'))
                .unwrap_or(trimmed.len());
            let word = &trimmed[..len];
            self.pos += len;
            let tok = match word.to_ascii_lowercase().as_str() {
                "and" => Token::And,
                "or" => Token::Or,
                "not" => Token::Not,
                "all" => Token::All,
                _ => Token::Ident(word.to_owned()),
            };
            return Ok((tok, start));
        }
        Err(ParseError::new(
            start,
            alloc::format!("unexpected character `{c}`"),
        ))
    }
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.at].0
    }

    fn pos(&self) -> usize {
        self.tokens[self.at].1
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].0.clone();
        if t != Token::End {
            self.at += 1;
        }
        t
    }

    fn or(&mut self) -> core::result::Result<Condition, ParseError> {
        let mut items = alloc::vec![self.and()?];
        while *self.peek() == Token::Or {
            self.bump();
            items.push(self.and()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Condition::Or(items)
        })
    }

    fn and(&mut self) -> core::result::Result<Condition, ParseError> {
        let mut items = alloc::vec![self.unary()?];
        while *self.peek() == Token::And {
            self.bump();
            items.push(self.unary()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Condition::And(items)
        })
    }

    fn unary(&mut self) -> core::result::Result<Condition, ParseError> {
        if *self.peek() == Token::Not {
            let not_at = self.pos();
            self.bump();
            let inner = self.primary()?;
            if !inner.negatable() {
                return Err(ParseError::new(
                    not_at,
                    "NOT applies only to a term or a disjunction of terms over one attribute",
                ));
            }
            return Ok(Condition::Not(Box::new(inner)));
        }
        self.primary()
    }

    fn primary(&mut self) -> core::result::Result<Condition, ParseError> {
        let at = self.pos();
        match self.bump() {
            Token::All => Ok(Condition::All),
            Token::Open => {
                let inner = self.or()?;
                if *self.peek() != Token::Close {
                    return Err(ParseError::new(self.pos(), "expected `)`"));
                }
                self.bump();
                Ok(inner)
            }
            Token::Ident(attribute) => {
                if *self.peek() != Token::Eq {
                    return Err(ParseError::new(self.pos(), "expected `=` after attribute"));
                }
                self.bump();
                let value_at = self.pos();
                match self.bump() {
                    Token::Str(value) => Ok(Condition::Term { attribute, value }),
                    _ => Err(ParseError::new(value_at, "expected a quoted value")),
                }
            }
            Token::End => Err(ParseError::new(at, "unexpected end of condition")),
            _ => Err(ParseError::new(at, "expected a term, ALL or `(`")),
        }
    }
}

/// Parses condition text. Attribute names are checked later, by
/// [`Condition::bind`].
pub fn parse_condition(text: &str) -> core::result::Result<Condition, ParseError> {
    let tokens = Lexer::tokens(text)?;
    let mut p = Parser { tokens, at: 0 };
    let expr = p.or()?;
    if *p.peek() != Token::End {
        return Err(ParseError::new(p.pos(), "unexpected trailing input"));
    }
    Ok(expr)
}
