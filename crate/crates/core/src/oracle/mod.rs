//! Knowledge oracles: anything that answers `(subject, relation, ?)` queries
//! and judges whether a verbalized rule holds in general.

mod chat;
mod mock;
mod replay;

pub use chat::{judge_messages, ChatMessage, ChatOracle, OracleConfig, TOKEN_ENV};
pub use mock::{JudgeTable, StoreOracle};
pub use replay::{load_fixtures, request_hash, FixtureRecord, ReplayServer};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{RelationId, RelationMeta};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KnowledgeQuery {
    /// Subject label.
    pub subject: String,
    pub relation: RelationId,
}

impl KnowledgeQuery {
    pub fn new(subject: impl Into<String>, relation: impl Into<RelationId>) -> Self {
        Self {
            subject: subject.into(),
            relation: relation.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerStatus {
    Answered,
    Unknown,
    Refused,
}

impl fmt::Display for AnswerStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnswerStatus::Answered => "answered",
            AnswerStatus::Unknown => "unknown",
            AnswerStatus::Refused => "refused",
        })
    }
}

/// `status == Answered` exactly when `entity` is present.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OracleAnswer {
    pub raw_text: String,
    pub entity: Option<String>,
    pub status: AnswerStatus,
}

impl OracleAnswer {
    pub fn answered(raw_text: impl Into<String>, entity: impl Into<String>) -> Self {
        Self {
            raw_text: raw_text.into(),
            entity: Some(entity.into()),
            status: AnswerStatus::Answered,
        }
    }

    pub fn unknown(raw_text: impl Into<String>) -> Self {
        Self {
            raw_text: raw_text.into(),
            entity: None,
            status: AnswerStatus::Unknown,
        }
    }

    pub fn refused(raw_text: impl Into<String>) -> Self {
        Self {
            raw_text: raw_text.into(),
            entity: None,
            status: AnswerStatus::Refused,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConfidenceLabel {
    #[serde(rename = "True")]
    True,
    #[serde(rename = "Usually True")]
    UsuallyTrue,
    #[serde(rename = "Sometimes True")]
    SometimesTrue,
    #[serde(rename = "False")]
    False,
    #[serde(rename = "Uncertain")]
    Uncertain,
}

impl ConfidenceLabel {
    pub const ALL: [ConfidenceLabel; 5] = [
        ConfidenceLabel::True,
        ConfidenceLabel::UsuallyTrue,
        ConfidenceLabel::SometimesTrue,
        ConfidenceLabel::False,
        ConfidenceLabel::Uncertain,
    ];

    /// The two top levels count as endorsement.
    pub fn accepts(self) -> bool {
        matches!(self, ConfidenceLabel::True | ConfidenceLabel::UsuallyTrue)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConfidenceLabel::True => "True",
            ConfidenceLabel::UsuallyTrue => "Usually True",
            ConfidenceLabel::SometimesTrue => "Sometimes True",
            ConfidenceLabel::False => "False",
            ConfidenceLabel::Uncertain => "Uncertain",
        }
    }
}

impl fmt::Display for ConfidenceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConfidenceLabel {
    type Err = String;

    /// Case-, space- and underscore-insensitive.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_alphabetic())
            .flat_map(char::to_lowercase)
            .collect();
        match key.as_str() {
            "true" => Ok(ConfidenceLabel::True),
            "usuallytrue" => Ok(ConfidenceLabel::UsuallyTrue),
            "sometimestrue" => Ok(ConfidenceLabel::SometimesTrue),
            "false" => Ok(ConfidenceLabel::False),
            "uncertain" => Ok(ConfidenceLabel::Uncertain),
            _ => Err(format!("unknown confidence label `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub rationale: String,
    pub label: ConfidenceLabel,
}

/// Splits a judge response at its last `Answer:` token. Responses without a
/// parseable label are `Uncertain`.
pub fn parse_judgment(response: &str) -> Judgment {
    let lower = response.to_ascii_lowercase();
    let Some(pos) = lower.rfind("answer:") else {
        return Judgment {
            rationale: response.trim().to_string(),
            label: ConfidenceLabel::Uncertain,
        };
    };
    let (before, after) = (&response[..pos], &response[pos + "answer:".len()..]);
    let token = after.lines().next().unwrap_or("").trim();
    let token = token.trim_end_matches(|c: char| !c.is_alphanumeric());
    Judgment {
        rationale: before.trim().to_string(),
        label: token.parse().unwrap_or(ConfidenceLabel::Uncertain),
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("oracle protocol error: {0}")]
    Protocol(String),
    #[error("invalid oracle query: {0}")]
    InvalidQuery(String),
    #[error("invalid oracle configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    File { path: String, message: String },
}

/// Source of entity answers and rule judgments.
pub trait KnowledgeOracle: Send + Sync {
    /// Object of `(q.subject, q.relation, ?)`.
    fn answer_query(&self, q: &KnowledgeQuery, meta: &RelationMeta) -> Result<OracleAnswer, OracleError>;

    /// Subject of `(?, relation, object)`.
    fn answer_inverse_query(
        &self,
        relation: &RelationId,
        object: &str,
        meta: &RelationMeta,
    ) -> Result<OracleAnswer, OracleError>;

    fn judge_rule(&self, nl_rule: &str) -> Result<Judgment, OracleError>;
}

impl<T: KnowledgeOracle + ?Sized> KnowledgeOracle for &T {
    fn answer_query(&self, q: &KnowledgeQuery, meta: &RelationMeta) -> Result<OracleAnswer, OracleError> {
        (**self).answer_query(q, meta)
    }
    fn answer_inverse_query(&self, r: &RelationId, o: &str, m: &RelationMeta) -> Result<OracleAnswer, OracleError> {
        (**self).answer_inverse_query(r, o, m)
    }
    fn judge_rule(&self, nl_rule: &str) -> Result<Judgment, OracleError> {
        (**self).judge_rule(nl_rule)
    }
}

impl<T: KnowledgeOracle + ?Sized> KnowledgeOracle for Box<T> {
    fn answer_query(&self, q: &KnowledgeQuery, meta: &RelationMeta) -> Result<OracleAnswer, OracleError> {
        (**self).answer_query(q, meta)
    }
    fn answer_inverse_query(&self, r: &RelationId, o: &str, m: &RelationMeta) -> Result<OracleAnswer, OracleError> {
        (**self).answer_inverse_query(r, o, m)
    }
    fn judge_rule(&self, nl_rule: &str) -> Result<Judgment, OracleError> {
        (**self).judge_rule(nl_rule)
    }
}

impl<T: KnowledgeOracle + ?Sized> KnowledgeOracle for Arc<T> {
    fn answer_query(&self, q: &KnowledgeQuery, meta: &RelationMeta) -> Result<OracleAnswer, OracleError> {
        (**self).answer_query(q, meta)
    }
    fn answer_inverse_query(&self, r: &RelationId, o: &str, m: &RelationMeta) -> Result<OracleAnswer, OracleError> {
        (**self).answer_inverse_query(r, o, m)
    }
    fn judge_rule(&self, nl_rule: &str) -> Result<Judgment, OracleError> {
        (**self).judge_rule(nl_rule)
    }
}

const SENTENCE_BOUNDARIES: [&str; 4] = ["\n", ". ", "! ", "? "];
const TERMINAL: &[char] = &['.', ',', ';', ':', '!', '?', '"', '\''];
const ARTICLES: [&str; 3] = ["the ", "a ", "an "];

/// Turns free text into an entity string: keep the first sentence, trim,
/// strip terminal punctuation, quotes and leading articles. Idempotent.
pub fn normalize_answer(text: &str) -> String {
    let mut current = text.to_string();
    loop {
        let next = normalize_once(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

fn normalize_once(text: &str) -> String {
    let mut t = text.trim();
    if let Some(cut) = SENTENCE_BOUNDARIES.iter().filter_map(|b| t.find(b)).min() {
        t = &t[..cut];
    }
    let mut t = t.trim().trim_matches(TERMINAL).trim();
    if let Some(article) = ARTICLES
        .iter()
        .find(|a| t.get(..a.len()).is_some_and(|p| p.eq_ignore_ascii_case(a)))
    {
        t = t[article.len()..].trim_start();
    }
    t.to_string()
}

pub const DEFAULT_REFUSAL_PHRASES: &[&str] = &[
    "i don't know",
    "i do not know",
    "cannot determine",
    "can't determine",
    "cannot answer",
    "can't answer",
    "not sure",
    "no information",
    "unknown",
];

/// Maps raw model text to an [`OracleAnswer`].
pub fn interpret_answer(raw: &str, refusal_phrases: &[String]) -> OracleAnswer {
    let lower = raw.to_lowercase();
    if refusal_phrases
        .iter()
        .any(|p| contains_phrase(&lower, &p.to_lowercase()))
    {
        return OracleAnswer::refused(raw);
    }
    let entity = normalize_answer(raw);
    if entity.is_empty() {
        OracleAnswer::unknown(raw)
    } else {
        OracleAnswer::answered(raw, entity)
    }
}

fn contains_phrase(haystack: &str, phrase: &str) -> bool {
    haystack.match_indices(phrase).any(|(i, _)| {
        let before = haystack[..i].chars().next_back();
        let after = haystack[i + phrase.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_answer("Mary."), "Mary");
        assert_eq!(normalize_answer(" Mary"), "Mary");
        assert_eq!(normalize_answer("The United Kingdom."), "United Kingdom");
        assert_eq!(normalize_answer("Paris. It is the capital."), "Paris");
        assert_eq!(normalize_answer("\"the the Mary\""), "Mary");
        assert_eq!(normalize_answer("Mary\nmore text"), "Mary");
    }

    #[test]
    fn refusals_and_unknowns() {
        let phrases: Vec<String> = DEFAULT_REFUSAL_PHRASES.iter().map(|s| s.to_string()).collect();
        assert_eq!(interpret_answer("I don't know.", &phrases).status, AnswerStatus::Refused);
        assert_eq!(interpret_answer("  . ", &phrases).status, AnswerStatus::Unknown);
        let a = interpret_answer("Mary.", &phrases);
        assert_eq!(a.entity.as_deref(), Some("Mary"));
        // whole-phrase match only
        assert_eq!(interpret_answer("Unknownia", &phrases).status, AnswerStatus::Answered);
    }

    #[test]
    fn judgment_parsing() {
        let j = parse_judgment("Siblings share a father. Answer: True");
        assert_eq!(j.label, ConfidenceLabel::True);
        assert_eq!(j.rationale, "Siblings share a father.");
        assert_eq!(parse_judgment("answer: usually true.").label, ConfidenceLabel::UsuallyTrue);
        assert_eq!(parse_judgment("Answer: Sometimes True").label, ConfidenceLabel::SometimesTrue);
        assert_eq!(parse_judgment("no label here").label, ConfidenceLabel::Uncertain);
        assert_eq!(parse_judgment("Answer: maybe").label, ConfidenceLabel::Uncertain);
        assert_eq!(
            parse_judgment("Answer: False? Actually... Answer: True").label,
            ConfidenceLabel::True
        );
    }

    #[test]
    fn label_parsing_and_acceptance() {
        assert_eq!("usually_true".parse::<ConfidenceLabel>().unwrap(), ConfidenceLabel::UsuallyTrue);
        assert_eq!("UsuallyTrue".parse::<ConfidenceLabel>().unwrap(), ConfidenceLabel::UsuallyTrue);
        let accepted: Vec<_> = ConfidenceLabel::ALL.iter().filter(|l| l.accepts()).collect();
        assert_eq!(accepted, vec![&ConfidenceLabel::True, &ConfidenceLabel::UsuallyTrue]);
    }

    proptest! {
        #[test]
        fn normalization_idempotent(t in "\\PC{0,30}") {
            let once = normalize_answer(&t);
            prop_assert_eq!(normalize_answer(&once), once.clone());
        }

        #[test]
        fn status_soundness(t in "\\PC{0,20}") {
            let phrases: Vec<String> = DEFAULT_REFUSAL_PHRASES.iter().map(|s| s.to_string()).collect();
            let a = interpret_answer(&t, &phrases);
            prop_assert_eq!(a.status == AnswerStatus::Answered, a.entity.is_some());
            if let Some(e) = &a.entity { prop_assert!(!e.is_empty()); }
        }
    }
}
