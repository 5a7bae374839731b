//! Relation verbalization metadata.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::RelationId;

const SUBJECT: &str = "{subject}";
const OBJECT: &str = "{object}";
const RELATION: &str = "{relation}";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrammaticalClass {
    /// "the {relation} of {subject} is {object}"
    Nominal,
    /// "{subject} {relation} {object}"
    Verbal,
}

#[derive(Debug, Error)]
pub enum MetaError {
    #[error("no relation metadata for `{0}`")]
    Missing(RelationId),
    #[error("relation `{relation}`: invalid template `{template}`: {reason}")]
    BadTemplate {
        relation: RelationId,
        template: String,
        reason: &'static str,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("metadata line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationMeta {
    pub relation: RelationId,
    /// Surface form substituted for `{relation}`.
    pub label: String,
    pub template: String,
    pub class: GrammaticalClass,
    pub symmetric: bool,
}

impl RelationMeta {
    pub fn nominal(relation: impl Into<RelationId>, label: impl Into<String>) -> Self {
        Self {
            relation: relation.into(),
            label: label.into(),
            template: "the {relation} of {subject} is {object}".to_string(),
            class: GrammaticalClass::Nominal,
            symmetric: false,
        }
    }

    pub fn verbal(relation: impl Into<RelationId>, label: impl Into<String>) -> Self {
        Self {
            relation: relation.into(),
            label: label.into(),
            template: "{subject} {relation} {object}".to_string(),
            class: GrammaticalClass::Verbal,
            symmetric: false,
        }
    }

    pub fn symmetric(mut self, symmetric: bool) -> Self {
        self.symmetric = symmetric;
        self
    }

    pub fn with_template(mut self, template: impl Into<String>) -> Result<Self, MetaError> {
        self.template = template.into();
        self.validate()?;
        Ok(self)
    }

    /// Default metadata for a relation without an entry: nominal, with
    /// underscores read as spaces.
    pub fn fallback(relation: &RelationId) -> Self {
        Self::nominal(relation.clone(), relation.as_str().replace('_', " "))
    }

    pub fn validate(&self) -> Result<(), MetaError> {
        let bad = |reason| MetaError::BadTemplate {
            relation: self.relation.clone(),
            template: self.template.clone(),
            reason,
        };
        let t = &self.template;
        if t.matches(SUBJECT).count() != 1 {
            return Err(bad("{subject} must appear exactly once"));
        }
        if t.matches(OBJECT).count() != 1 {
            return Err(bad("{object} must appear exactly once"));
        }
        if t.find(SUBJECT) > t.find(OBJECT) {
            return Err(bad("{subject} must precede {object}"));
        }
        match self.class {
            GrammaticalClass::Nominal => {
                if !t.to_lowercase().starts_with("the ") || !t.ends_with(OBJECT) {
                    return Err(bad("nominal templates read `the ... of {subject} is {object}`"));
                }
            }
            GrammaticalClass::Verbal => {
                if !t.starts_with(SUBJECT) || !t.ends_with(OBJECT) {
                    return Err(bad("verbal templates read `{subject} ... {object}`"));
                }
            }
        }
        Ok(())
    }

    fn filled(&self) -> String {
        self.template.replace(RELATION, &self.label)
    }

    /// Lower-case clause, e.g. "the father of A is B".
    pub fn clause(&self, subject: &str, object: &str) -> String {
        self.filled().replace(SUBJECT, subject).replace(OBJECT, object)
    }

    /// Capitalized statement, e.g. "The spouse of Carol is Mary".
    pub fn sentence(&self, subject: &str, object: &str) -> String {
        capitalize(&self.clause(subject, object))
    }

    /// Completion prompt with the object left open, e.g. "The spouse of Carol is".
    pub fn prompt(&self, subject: &str) -> String {
        let (prefix, suffix) = self.prompt_parts();
        capitalize(&format!("{prefix}{subject}{suffix}"))
    }

    /// Text before and after the subject in [`RelationMeta::prompt`].
    pub fn prompt_parts(&self) -> (String, String) {
        let filled = self.filled();
        let (head, rest) = filled.split_once(SUBJECT).expect("validated template");
        let (mid, _) = rest.split_once(OBJECT).expect("validated template");
        (head.to_string(), mid.trim_end().to_string())
    }

    /// Prompt for the entity standing in this relation to `object`.
    pub fn inverse_prompt(&self, object: &str) -> String {
        capitalize(&format!("{} is", self.inverse_phrase(object)))
    }

    /// Noun phrase for the object reached from `of`, e.g. "the spouse of B".
    pub fn object_phrase(&self, of: &str) -> String {
        match self.class {
            GrammaticalClass::Nominal => format!("the {} of {of}", self.label),
            GrammaticalClass::Verbal => format!("the entity that {of} {}", self.label),
        }
    }

    /// Noun phrase for the subject that reaches `of`.
    pub fn inverse_phrase(&self, of: &str) -> String {
        match self.class {
            GrammaticalClass::Nominal => format!("the entity whose {} is {of}", self.label),
            GrammaticalClass::Verbal => format!("the entity that {} {of}", self.label),
        }
    }
}

pub(crate) fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Relation metadata keyed by relation id.
///
/// With fallback enabled, unknown relations get [`RelationMeta::fallback`]
/// instead of an error.
#[derive(Clone, Debug, Default)]
pub struct MetaTable {
    entries: BTreeMap<RelationId, RelationMeta>,
    fallback: bool,
}

impl MetaTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fallback() -> Self {
        Self {
            entries: BTreeMap::new(),
            fallback: true,
        }
    }

    pub fn set_fallback(&mut self, on: bool) {
        self.fallback = on;
    }

    pub fn insert(&mut self, meta: RelationMeta) -> Result<(), MetaError> {
        meta.validate()?;
        self.entries.insert(meta.relation.clone(), meta);
        Ok(())
    }

    pub fn from_entries(entries: impl IntoIterator<Item = RelationMeta>) -> Result<Self, MetaError> {
        let mut table = Self::new();
        for m in entries {
            table.insert(m)?;
        }
        Ok(table)
    }

    pub fn get(&self, r: &RelationId) -> Result<Cow<'_, RelationMeta>, MetaError> {
        match self.entries.get(r) {
            Some(m) => Ok(Cow::Borrowed(m)),
            None if self.fallback => Ok(Cow::Owned(RelationMeta::fallback(r))),
            None => Err(MetaError::Missing(r.clone())),
        }
    }

    pub fn is_symmetric(&self, r: &RelationId) -> bool {
        self.entries.get(r).is_some_and(|m| m.symmetric)
    }

    pub fn iter(&self) -> impl Iterator<Item = &RelationMeta> {
        self.entries.values()
    }

    /// Parses `relation<TAB>label<TAB>nominal|verbal<TAB>symmetric[<TAB>template]`.
    pub fn parse(text: &str) -> Result<Self, MetaError> {
        let mut table = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let malformed = |message: String| MetaError::Malformed { line: i + 1, message };
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if !(4..=5).contains(&cols.len()) {
                return Err(malformed(format!("expected 4 or 5 columns, found {}", cols.len())));
            }
            let base = match cols[2] {
                "nominal" => RelationMeta::nominal(cols[0], cols[1]),
                "verbal" => RelationMeta::verbal(cols[0], cols[1]),
                other => return Err(malformed(format!("unknown class `{other}`"))),
            };
            let symmetric = match cols[3] {
                "true" | "yes" | "1" => true,
                "false" | "no" | "0" => false,
                other => return Err(malformed(format!("bad symmetric flag `{other}`"))),
            };
            let meta = match cols.get(4) {
                Some(t) => base.with_template(*t)?,
                None => base,
            };
            table.insert(meta.symmetric(symmetric))?;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, MetaError> {
        let text = fs::read_to_string(path).map_err(|source| MetaError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }
}
