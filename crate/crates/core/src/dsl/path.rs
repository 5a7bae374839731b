//! Dot-path expressions such as `O.spouse`, `S.birthplace.country` and
//! `father.S`.
//!
//! ```text
//! path   := [prefix "."] root ("." rel)*
//! prefix := rel                      (inverse step: "the entity whose rel is ROOT")
//! root   := "S" | "O" | "X"
//! ```
//!
//! Suffix steps are read left to right. At most one inverse prefix is allowed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::miner::{BodyStep, Direction};
use crate::store::RelationId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Root {
    /// The edit's subject.
    S,
    /// The edit's object.
    O,
    /// An entity defined by a directive's binding constraint.
    X,
}

impl Root {
    fn token(self) -> &'static str {
        match self {
            Root::S => "S",
            Root::O => "O",
            Root::X => "X",
        }
    }

    fn from_token(t: &str) -> Option<Self> {
        match t {
            "S" => Some(Root::S),
            "O" => Some(Root::O),
            "X" => Some(Root::X),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathErrorKind {
    Empty,
    DanglingDot,
    InvalidCharacter(char),
    UnknownRoot,
    MultipleInversePrefixes,
    UnexpectedRoot,
}

impl fmt::Display for PathErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathErrorKind::Empty => f.write_str("empty path"),
            PathErrorKind::DanglingDot => f.write_str("dangling dot"),
            PathErrorKind::InvalidCharacter(c) => write!(f, "invalid character {c:?}"),
            PathErrorKind::UnknownRoot => f.write_str("no root placeholder (S, O or X)"),
            PathErrorKind::MultipleInversePrefixes => {
                f.write_str("only one inverse prefix step is allowed")
            }
            PathErrorKind::UnexpectedRoot => f.write_str("placeholder used as a relation"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("path `{text}` at offset {offset}: {kind}")]
pub struct PathParseError {
    pub text: String,
    pub offset: usize,
    pub kind: PathErrorKind,
}

/// A placeholder followed by relation steps. Only the first step may be an
/// inverse step.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PathExpr {
    root: Root,
    steps: Vec<BodyStep>,
}

pub(crate) fn valid_relation_token(t: &str) -> bool {
    !t.is_empty()
        && Root::from_token(t).is_none()
        && t.chars().all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | ':'))
}

impl PathExpr {
    pub fn new(root: Root, steps: Vec<BodyStep>) -> Result<Self, String> {
        if steps
            .iter()
            .skip(1)
            .any(|s| s.direction == Direction::Inverse)
        {
            return Err("only the first step of a path may be inverse".to_string());
        }
        if let Some(bad) = steps.iter().find(|s| !valid_relation_token(s.relation.as_str())) {
            return Err(format!("`{}` is not a valid path relation", bad.relation));
        }
        Ok(Self { root, steps })
    }

    pub fn bare(root: Root) -> Self {
        Self {
            root,
            steps: Vec::new(),
        }
    }

    /// `root.rel1.rel2...`
    pub fn forward(root: Root, relations: &[&str]) -> Self {
        Self::new(root, relations.iter().map(|r| BodyStep::forward(*r)).collect())
            .expect("forward relations")
    }

    /// `rel.root`
    pub fn inverse(root: Root, relation: &str) -> Self {
        Self::new(root, vec![BodyStep::inverse(relation)]).expect("single inverse step")
    }

    pub fn root(&self) -> Root {
        self.root
    }

    pub fn steps(&self) -> &[BodyStep] {
        &self.steps
    }

    pub fn is_bare(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn relations(&self) -> impl Iterator<Item = &RelationId> {
        self.steps.iter().map(|s| &s.relation)
    }
}

pub fn parse_path(text: &str) -> Result<PathExpr, PathParseError> {
    let err = |offset, kind| PathParseError {
        text: text.to_string(),
        offset,
        kind,
    };
    if text.is_empty() {
        return Err(err(0, PathErrorKind::Empty));
    }
    // (char offset, token)
    let mut tokens: Vec<(usize, &str)> = Vec::new();
    let mut start_byte = 0;
    let mut start_char = 0;
    for (ci, (bi, c)) in text.char_indices().enumerate() {
        if c == '.' {
            if bi == start_byte {
                return Err(err(ci, PathErrorKind::DanglingDot));
            }
            tokens.push((start_char, &text[start_byte..bi]));
            start_byte = bi + 1;
            start_char = ci + 1;
        } else if !(c.is_alphanumeric() || matches!(c, '_' | '-' | ':')) {
            return Err(err(ci, PathErrorKind::InvalidCharacter(c)));
        }
    }
    if start_byte == text.len() {
        return Err(err(text.chars().count() - 1, PathErrorKind::DanglingDot));
    }
    tokens.push((start_char, &text[start_byte..]));

    let root_pos = tokens
        .iter()
        .position(|(_, t)| Root::from_token(t).is_some())
        .ok_or_else(|| err(0, PathErrorKind::UnknownRoot))?;
    if root_pos > 1 {
        return Err(err(tokens[1].0, PathErrorKind::MultipleInversePrefixes));
    }
    let root = Root::from_token(tokens[root_pos].1).expect("position found a root");
    let mut steps = Vec::with_capacity(tokens.len() - 1);
    if root_pos == 1 {
        steps.push(BodyStep::inverse(tokens[0].1));
    }
    for &(offset, t) in &tokens[root_pos + 1..] {
        if Root::from_token(t).is_some() {
            return Err(err(offset, PathErrorKind::UnexpectedRoot));
        }
        steps.push(BodyStep::forward(t));
    }
    Ok(PathExpr { root, steps })
}

impl fmt::Display for PathExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut rest = self.steps.as_slice();
        match rest.first() {
            Some(first) if first.direction == Direction::Inverse => {
                write!(f, "{}.{}", first.relation, self.root.token())?;
                rest = &rest[1..];
            }
            _ => f.write_str(self.root.token())?,
        }
        for step in rest {
            write!(f, ".{}", step.relation)?;
        }
        Ok(())
    }
}

/// Canonical text form.
pub fn render_path(p: &PathExpr) -> String {
    p.to_string()
}

impl FromStr for PathExpr {
    type Err = PathParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_path(s)
    }
}

impl Serialize for PathExpr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PathExpr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_path(&text).map_err(serde::de::Error::custom)
    }
}
