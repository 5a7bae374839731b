//! Expansion of a single edit into a batch of logically entailed edits.
//!
//! Directives triggered by the edited relation are grounded with the edit's
//! subject and object; remaining path steps are answered by the oracle, left
//! to right. Every query goes to the oracle as it is before the edit: the
//! batch is assembled first and applied as a whole afterwards.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dsl::{DirectiveRule, PathExpr, Root, RuleSet};
use crate::miner::{BodyStep, Direction};
use crate::oracle::{AnswerStatus, KnowledgeOracle, KnowledgeQuery, OracleError};
use crate::store::{MetaError, MetaTable, RelationId};

pub const BATCH_VERSION: &str = "chainedit-batch/1";

/// A requested edit `(subject, relation, object)` over entity labels.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EditRequest {
    pub subject: String,
    pub relation: RelationId,
    pub object: String,
}

impl EditRequest {
    pub fn new(
        subject: impl Into<String>,
        relation: impl Into<RelationId>,
        object: impl Into<String>,
    ) -> Result<Self, ExpandError> {
        let e = Self {
            subject: subject.into(),
            relation: relation.into(),
            object: object.into(),
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<(), ExpandError> {
        if self.subject.trim().is_empty() || self.relation.as_str().trim().is_empty() || self.object.trim().is_empty() {
            return Err(ExpandError::InvalidEdit(format!("empty field in {self}")));
        }
        Ok(())
    }

    fn triple(&self) -> TripleKey {
        (self.subject.clone(), self.relation.clone(), self.object.clone())
    }
}

impl fmt::Display for EditRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.relation, self.object)
    }
}

/// `subject|relation|object`
impl FromStr for EditRequest {
    type Err = ExpandError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('|').collect();
        match parts.as_slice() {
            [subj, rel, obj] => Self::new(subj.trim(), rel.trim(), obj.trim()),
            _ => Err(ExpandError::InvalidEdit(format!(
                "`{s}`: expected `subject|relation|object`"
            ))),
        }
    }
}

type TripleKey = (String, RelationId, String);

/// One oracle exchange made while resolving a directive.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedQuery {
    pub prompt: String,
    pub raw: String,
    pub answer: Option<String>,
    pub status: AnswerStatus,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedEdit {
    pub subject: String,
    pub relation: RelationId,
    pub object: String,
    pub directive_id: String,
    /// 1 for edits derived from the original edit, 2 for edits derived
    /// from those, and so on.
    pub depth: usize,
    pub queries: Vec<ResolvedQuery>,
}

impl DerivedEdit {
    fn key(&self) -> TripleKey {
        (self.subject.clone(), self.relation.clone(), self.object.clone())
    }

    pub fn as_edit(&self) -> EditRequest {
        EditRequest {
            subject: self.subject.clone(),
            relation: self.relation.clone(),
            object: self.object.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SkipReason {
    UnknownAtStep(BodyStep),
    RefusedAtStep(BodyStep),
    /// The derived triple is already in the batch.
    Duplicate,
    ConflictsWithOriginal,
    ConflictsWithDerived,
    /// The oracle already holds the derived fact.
    Noop,
}

fn step_token(step: &BodyStep) -> String {
    match step.direction {
        Direction::Forward => step.relation.to_string(),
        Direction::Inverse => format!("inv:{}", step.relation),
    }
}

fn parse_step_token(t: &str) -> Option<BodyStep> {
    if t.is_empty() {
        return None;
    }
    Some(match t.strip_prefix("inv:") {
        Some(rel) if !rel.is_empty() => BodyStep::inverse(rel),
        Some(_) => return None,
        None => BodyStep::forward(t),
    })
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipReason::UnknownAtStep(s) => write!(f, "unknown_at_step({})", step_token(s)),
            SkipReason::RefusedAtStep(s) => write!(f, "refused_at_step({})", step_token(s)),
            SkipReason::Duplicate => f.write_str("duplicate"),
            SkipReason::ConflictsWithOriginal => f.write_str("conflicts_with_original"),
            SkipReason::ConflictsWithDerived => f.write_str("conflicts_with_derived"),
            SkipReason::Noop => f.write_str("noop"),
        }
    }
}

impl FromStr for SkipReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let with_step = |inner: &str| parse_step_token(inner).ok_or_else(|| format!("bad step in `{s}`"));
        if let Some(inner) = s.strip_prefix("unknown_at_step(").and_then(|r| r.strip_suffix(')')) {
            return Ok(SkipReason::UnknownAtStep(with_step(inner)?));
        }
        if let Some(inner) = s.strip_prefix("refused_at_step(").and_then(|r| r.strip_suffix(')')) {
            return Ok(SkipReason::RefusedAtStep(with_step(inner)?));
        }
        match s {
            "duplicate" => Ok(SkipReason::Duplicate),
            "conflicts_with_original" => Ok(SkipReason::ConflictsWithOriginal),
            "conflicts_with_derived" => Ok(SkipReason::ConflictsWithDerived),
            "noop" => Ok(SkipReason::Noop),
            _ => Err(format!("unknown skip reason `{s}`")),
        }
    }
}

impl Serialize for SkipReason {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SkipReason {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedDirective {
    pub directive_id: String,
    pub reason: SkipReason,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EditBatch {
    pub original: EditRequest,
    pub derived: Vec<DerivedEdit>,
    pub skipped: Vec<SkippedDirective>,
}

impl EditBatch {
    pub fn original_only(original: EditRequest) -> Self {
        Self {
            original,
            derived: Vec::new(),
            skipped: Vec::new(),
        }
    }

    /// The original edit followed by every derived edit.
    pub fn edits(&self) -> Vec<EditRequest> {
        std::iter::once(self.original.clone())
            .chain(self.derived.iter().map(DerivedEdit::as_edit))
            .collect()
    }

    pub fn len(&self) -> usize {
        1 + self.derived.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: BatchLine| {
            out.push_str(&serde_json::to_string(&line).expect("batch line serializes"));
            out.push('\n');
        };
        push(BatchLine::Original {
            version: BATCH_VERSION.to_string(),
            subject: self.original.subject.clone(),
            relation: self.original.relation.clone(),
            object: self.original.object.clone(),
        });
        for d in &self.derived {
            push(BatchLine::Derived(d.clone()));
        }
        for s in &self.skipped {
            push(BatchLine::Skipped(s.clone()));
        }
        out
    }

    /// The batch-file records as one JSON array, as sent over HTTP.
    pub fn to_json(&self) -> String {
        let lines: Vec<Value> = self
            .to_jsonl()
            .lines()
            .map(|l| serde_json::from_str(l).expect("own output parses"))
            .collect();
        Value::Array(lines).to_string()
    }

    pub fn from_json(text: &str) -> Result<Self, BatchFileError> {
        let lines: Vec<Value> = serde_json::from_str(text).map_err(|e| BatchFileError::Line {
            line: 1,
            message: e.to_string(),
        })?;
        let jsonl: String = lines.iter().map(|v| format!("{v}\n")).collect();
        Self::from_jsonl(&jsonl)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, BatchFileError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str::<BatchLine>(l).map_err(|e| BatchFileError::Line {
                    line: i + 1,
                    message: e.to_string(),
                })
            });
        let original = match lines.next().transpose()? {
            Some(BatchLine::Original {
                version,
                subject,
                relation,
                object,
            }) => {
                if version != BATCH_VERSION {
                    return Err(BatchFileError::Version(version));
                }
                EditRequest {
                    subject,
                    relation,
                    object,
                }
            }
            Some(_) => return Err(BatchFileError::MissingOriginal),
            None => return Err(BatchFileError::MissingOriginal),
        };
        let mut batch = EditBatch::original_only(original);
        let mut seen: HashSet<TripleKey> = HashSet::from([batch.original.triple()]);
        for line in lines {
            match line? {
                BatchLine::Original { .. } => return Err(BatchFileError::MissingOriginal),
                BatchLine::Derived(d) => {
                    if !seen.insert(d.key()) {
                        return Err(BatchFileError::DuplicateTriple(d.as_edit().to_string()));
                    }
                    batch.derived.push(d);
                }
                BatchLine::Skipped(s) => batch.skipped.push(s),
            }
        }
        Ok(batch)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum BatchLine {
    Original {
        version: String,
        subject: String,
        relation: RelationId,
        object: String,
    },
    Derived(DerivedEdit),
    Skipped(SkippedDirective),
}

#[derive(Debug, Error)]
pub enum BatchFileError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("unsupported batch version `{0}`, expected `{BATCH_VERSION}`")]
    Version(String),
    #[error("a batch file holds exactly one `original` line, and it comes first")]
    MissingOriginal,
    #[error("triple {0} appears twice")]
    DuplicateTriple(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn emit_batch(batch: &EditBatch, path: &Path) -> Result<(), BatchFileError> {
    let io = |source| BatchFileError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(batch.to_jsonl().as_bytes()).map_err(io)
}

pub fn load_batch(path: &Path) -> Result<EditBatch, BatchFileError> {
    let text = fs::read_to_string(path).map_err(|source| BatchFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    EditBatch::from_jsonl(&text)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictPolicy {
    #[default]
    DropDerived,
    Error,
}

impl FromStr for ConflictPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "drop_derived" | "drop-derived" => Ok(ConflictPolicy::DropDerived),
            "error" => Ok(ConflictPolicy::Error),
            _ => Err(format!("unknown conflict policy `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpansionConfig {
    pub depth: usize,
    pub conflict_policy: ConflictPolicy,
    pub include_disabled_dual_paths: bool,
    pub skip_noop: bool,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self {
            depth: 1,
            conflict_policy: ConflictPolicy::DropDerived,
            include_disabled_dual_paths: false,
            skip_noop: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum ExpandError {
    #[error("invalid edit: {0}")]
    InvalidEdit(String),
    #[error("invalid expansion config: {0}")]
    Config(String),
    #[error("directive `{directive_id}`: {reason}")]
    Integrity { directive_id: String, reason: String },
    #[error("directive `{directive_id}`: {source}")]
    Meta {
        directive_id: String,
        #[source]
        source: MetaError,
    },
    #[error("directive `{directive_id}`: {source}")]
    Oracle {
        directive_id: String,
        #[source]
        source: OracleError,
    },
    #[error("derived {derived} from `{directive_id}` conflicts with {existing}")]
    Conflict {
        existing: String,
        derived: String,
        directive_id: String,
    },
}

/// Directives triggered by the edit's relation, in ruleset order.
pub fn match_rules<'a>(edit: &EditRequest, rules: &'a RuleSet, include_disabled: bool) -> Vec<&'a DirectiveRule> {
    rules
        .triggered_by(edit.relation.as_str())
        .filter(|d| d.enabled || include_disabled)
        .collect()
}

/// A template slot after substituting `S` and `O`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Slot {
    Bound(String),
    /// Walk `steps` from `start` through the oracle.
    Pending { start: String, steps: Vec<BodyStep> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundedTemplate {
    pub subject: Slot,
    pub relation: RelationId,
    pub object: Slot,
}

/// Grounds a directive's template with the edit. `X` slots become an
/// inverse step from the bound anchor.
pub fn substitute(d: &DirectiveRule, edit: &EditRequest) -> Result<GroundedTemplate, ExpandError> {
    let slot = |p: &PathExpr| -> Result<Slot, ExpandError> {
        let (start, mut steps) = match p.root() {
            Root::S => (edit.subject.clone(), Vec::new()),
            Root::O => (edit.object.clone(), Vec::new()),
            Root::X => {
                let x = d.x_binding.as_ref().ok_or_else(|| ExpandError::Integrity {
                    directive_id: d.id.clone(),
                    reason: "X is used but no x_binding defines it".to_string(),
                })?;
                let anchor = match x.anchor.root() {
                    Root::S => edit.subject.clone(),
                    _ => edit.object.clone(),
                };
                (anchor, vec![BodyStep::inverse(x.relation.as_str())])
            }
        };
        steps.extend(p.steps().iter().cloned());
        Ok(if steps.is_empty() {
            Slot::Bound(start)
        } else {
            Slot::Pending { start, steps }
        })
    };
    Ok(GroundedTemplate {
        subject: slot(&d.psi_subject)?,
        relation: d.psi_relation.clone(),
        object: slot(&d.psi_object)?,
    })
}

enum Walk {
    Done(String),
    Skip(SkipReason),
}

fn resolve_slot(
    slot: &Slot,
    oracle: &dyn KnowledgeOracle,
    meta: &MetaTable,
    directive_id: &str,
    log: &mut Vec<ResolvedQuery>,
) -> Result<Walk, ExpandError> {
    let (start, steps) = match slot {
        Slot::Bound(v) => return Ok(Walk::Done(v.clone())),
        Slot::Pending { start, steps } => (start, steps),
    };
    let mut current = start.clone();
    for step in steps {
        let m = meta.get(&step.relation).map_err(|source| ExpandError::Meta {
            directive_id: directive_id.to_string(),
            source,
        })?;
        let (prompt, answer) = match step.direction {
            Direction::Forward => (
                m.prompt(&current),
                oracle.answer_query(&KnowledgeQuery::new(current.clone(), step.relation.clone()), &m),
            ),
            Direction::Inverse => (
                m.inverse_prompt(&current),
                oracle.answer_inverse_query(&step.relation, &current, &m),
            ),
        };
        let answer = answer.map_err(|source| ExpandError::Oracle {
            directive_id: directive_id.to_string(),
            source,
        })?;
        log.push(ResolvedQuery {
            prompt,
            raw: answer.raw_text.clone(),
            answer: answer.entity.clone(),
            status: answer.status,
        });
        match (answer.status, answer.entity) {
            (AnswerStatus::Answered, Some(e)) => current = e,
            (AnswerStatus::Refused, _) => return Ok(Walk::Skip(SkipReason::RefusedAtStep(step.clone()))),
            _ => return Ok(Walk::Skip(SkipReason::UnknownAtStep(step.clone()))),
        }
    }
    Ok(Walk::Done(current))
}

/// Outcome of resolving one grounded directive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Resolution {
    Triple {
        subject: String,
        relation: RelationId,
        object: String,
        queries: Vec<ResolvedQuery>,
    },
    Skipped {
        reason: SkipReason,
        queries: Vec<ResolvedQuery>,
    },
}

/// Resolves the subject slot, then the object slot. The first unknown or
/// refused answer ends resolution.
pub fn resolve(
    t: &GroundedTemplate,
    oracle: &dyn KnowledgeOracle,
    meta: &MetaTable,
    directive_id: &str,
) -> Result<Resolution, ExpandError> {
    let mut queries = Vec::new();
    let subject = match resolve_slot(&t.subject, oracle, meta, directive_id, &mut queries)? {
        Walk::Done(v) => v,
        Walk::Skip(reason) => return Ok(Resolution::Skipped { reason, queries }),
    };
    let object = match resolve_slot(&t.object, oracle, meta, directive_id, &mut queries)? {
        Walk::Done(v) => v,
        Walk::Skip(reason) => return Ok(Resolution::Skipped { reason, queries }),
    };
    Ok(Resolution::Triple {
        subject,
        relation: t.relation.clone(),
        object,
        queries,
    })
}

fn show(t: &TripleKey) -> String {
    format!("({}, {}, {})", t.0, t.1, t.2)
}

/// Expands `edit` into a batch. With `depth > 1`, accepted derived edits
/// are expanded again; triples already in the batch are never re-derived.
pub fn expand(
    edit: &EditRequest,
    rules: &RuleSet,
    oracle: &dyn KnowledgeOracle,
    meta: &MetaTable,
    cfg: &ExpansionConfig,
) -> Result<EditBatch, ExpandError> {
    edit.validate()?;
    if cfg.depth == 0 {
        return Err(ExpandError::Config("depth must be at least 1".to_string()));
    }
    let mut batch = EditBatch::original_only(edit.clone());
    let original = edit.triple();
    let mut visited: HashSet<TripleKey> = HashSet::from([original.clone()]);
    // (subject, relation) -> object of the accepted derived edit holding it
    let mut held: HashMap<(String, RelationId), String> = HashMap::new();
    let mut frontier: VecDeque<(EditRequest, usize)> = VecDeque::from([(edit.clone(), 0)]);

    while let Some((trigger, level)) = frontier.pop_front() {
        if level >= cfg.depth {
            continue;
        }
        for d in match_rules(&trigger, rules, cfg.include_disabled_dual_paths) {
            let skip = |batch: &mut EditBatch, reason| {
                batch.skipped.push(SkippedDirective {
                    directive_id: d.id.clone(),
                    reason,
                })
            };
            let grounded = substitute(d, &trigger)?;
            let (subject, relation, object, queries) = match resolve(&grounded, oracle, meta, &d.id)? {
                Resolution::Skipped { reason, .. } => {
                    skip(&mut batch, reason);
                    continue;
                }
                Resolution::Triple {
                    subject,
                    relation,
                    object,
                    queries,
                } => (subject, relation, object, queries),
            };
            let key: TripleKey = (subject.clone(), relation.clone(), object.clone());
            if visited.contains(&key) {
                skip(&mut batch, SkipReason::Duplicate);
                continue;
            }
            if subject == original.0 && relation == original.1 {
                if cfg.conflict_policy == ConflictPolicy::Error {
                    return Err(ExpandError::Conflict {
                        existing: show(&original),
                        derived: show(&key),
                        directive_id: d.id.clone(),
                    });
                }
                skip(&mut batch, SkipReason::ConflictsWithOriginal);
                continue;
            }
            if let Some(other) = held.get(&(subject.clone(), relation.clone())) {
                if cfg.conflict_policy == ConflictPolicy::Error {
                    return Err(ExpandError::Conflict {
                        existing: show(&(subject.clone(), relation.clone(), other.clone())),
                        derived: show(&key),
                        directive_id: d.id.clone(),
                    });
                }
                skip(&mut batch, SkipReason::ConflictsWithDerived);
                continue;
            }
            if cfg.skip_noop && already_held(&key, oracle, meta, &d.id)? {
                skip(&mut batch, SkipReason::Noop);
                continue;
            }
            visited.insert(key);
            held.insert((subject.clone(), relation.clone()), object.clone());
            let derived = DerivedEdit {
                subject,
                relation,
                object,
                directive_id: d.id.clone(),
                depth: level + 1,
                queries,
            };
            frontier.push_back((derived.as_edit(), level + 1));
            batch.derived.push(derived);
        }
    }
    Ok(batch)
}

fn already_held(
    key: &TripleKey,
    oracle: &dyn KnowledgeOracle,
    meta: &MetaTable,
    directive_id: &str,
) -> Result<bool, ExpandError> {
    let m = meta.get(&key.1).map_err(|source| ExpandError::Meta {
        directive_id: directive_id.to_string(),
        source,
    })?;
    let a = oracle
        .answer_query(&KnowledgeQuery::new(key.0.clone(), key.1.clone()), &m)
        .map_err(|source| ExpandError::Oracle {
            directive_id: directive_id.to_string(),
            source,
        })?;
    Ok(a.entity.as_deref() == Some(key.2.as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{Provenance, XBinding, Anchor};
    use crate::oracle::StoreOracle;
    use crate::store::TripleStore;
    use std::sync::Arc;

    fn kb(rows: &[(&str, &str, &str)]) -> StoreOracle {
        StoreOracle::new(Arc::new(TripleStore::from_triples(rows.iter().copied(), &HashMap::new())))
    }

    fn family_rules() -> RuleSet {
        let manual = || Provenance::Manual { note: None };
        RuleSet::new(vec![
            DirectiveRule::new(
                "r1-a",
                "father",
                (PathExpr::bare(Root::S), "mother", PathExpr::forward(Root::O, &["spouse"])),
                None,
                manual(),
            )
            .unwrap(),
            DirectiveRule::new(
                "r1-b",
                "spouse",
                (PathExpr::bare(Root::X), "mother", PathExpr::bare(Root::O)),
                Some(XBinding {
                    relation: "father".into(),
                    anchor: Anchor::S,
                }),
                manual(),
            )
            .unwrap(),
        ])
        .unwrap()
    }

    fn family() -> StoreOracle {
        kb(&[
            ("Alice", "father", "Bob"),
            ("Alice", "mother", "Rose"),
            ("Bob", "spouse", "Rose"),
            ("Carol", "spouse", "Mary"),
        ])
    }

    #[test]
    fn family_scenario() {
        let edit: EditRequest = "Alice|father|Carol".parse().unwrap();
        let b = expand(&edit, &family_rules(), &family(), &MetaTable::with_fallback(), &Default::default()).unwrap();
        let edits: Vec<String> = b.edits().iter().map(ToString::to_string).collect();
        assert_eq!(edits, vec!["(Alice, father, Carol)", "(Alice, mother, Mary)"]);
        assert_eq!(b.derived[0].queries[0].prompt, "The spouse of Carol is");
        assert!(b.skipped.is_empty());
    }

    #[test]
    fn x_binding_walks_inverse_first() {
        let edit: EditRequest = "Bob|spouse|Jane".parse().unwrap();
        let b = expand(&edit, &family_rules(), &family(), &MetaTable::with_fallback(), &Default::default()).unwrap();
        assert_eq!(b.derived[0].as_edit().to_string(), "(Alice, mother, Jane)");
        assert_eq!(b.derived[0].queries[0].prompt, "The entity whose father is Bob is");
    }

    #[test]
    fn unknown_step_is_skipped() {
        let edit: EditRequest = "Alice|father|Dave".parse().unwrap();
        let b = expand(&edit, &family_rules(), &family(), &MetaTable::with_fallback(), &Default::default()).unwrap();
        assert!(b.derived.is_empty());
        assert_eq!(b.skipped[0].reason.to_string(), "unknown_at_step(spouse)");
    }

    #[test]
    fn multi_step_path() {
        let t = GroundedTemplate {
            subject: Slot::Bound("x".into()),
            relation: "citizenship".into(),
            object: Slot::Pending {
                start: "X".into(),
                steps: vec![BodyStep::forward("birthplace"), BodyStep::forward("country")],
            },
        };
        let o = kb(&[("X", "birthplace", "Paris"), ("Paris", "country", "France")]);
        match resolve(&t, &o, &MetaTable::with_fallback(), "d").unwrap() {
            Resolution::Triple { object, queries, .. } => {
                assert_eq!(object, "France");
                assert_eq!(queries.len(), 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn conflicts_follow_policy() {
        let rules = RuleSet::new(vec![DirectiveRule::new(
            "loop",
            "father",
            (PathExpr::bare(Root::S), "father", PathExpr::forward(Root::O, &["spouse"])),
            None,
            Provenance::Manual { note: None },
        )
        .unwrap()])
        .unwrap();
        let edit: EditRequest = "Alice|father|Carol".parse().unwrap();
        let meta = MetaTable::with_fallback();
        let b = expand(&edit, &rules, &family(), &meta, &Default::default()).unwrap();
        assert_eq!(b.skipped[0].reason, SkipReason::ConflictsWithOriginal);
        let strict = ExpansionConfig {
            conflict_policy: ConflictPolicy::Error,
            ..Default::default()
        };
        let err = expand(&edit, &rules, &family(), &meta, &strict).unwrap_err().to_string();
        assert!(err.contains("(Alice, father, Mary)") && err.contains("(Alice, father, Carol)"), "{err}");
    }

    #[test]
    fn batch_round_trip() {
        let edit: EditRequest = "Alice|father|Carol".parse().unwrap();
        let mut b = expand(&edit, &family_rules(), &family(), &MetaTable::with_fallback(), &Default::default()).unwrap();
        b.skipped.push(SkippedDirective {
            directive_id: "x".into(),
            reason: SkipReason::RefusedAtStep(BodyStep::inverse("father")),
        });
        let text = b.to_jsonl();
        assert!(text.starts_with("{\"type\":\"original\",\"version\":\"chainedit-batch/1\""));
        assert_eq!(EditBatch::from_jsonl(&text).unwrap(), b);
        assert_eq!(EditBatch::from_json(&b.to_json()).unwrap(), b);
        assert!(matches!(EditBatch::from_jsonl(""), Err(BatchFileError::MissingOriginal)));
    }

    #[test]
    fn edit_syntax() {
        assert!("a|b".parse::<EditRequest>().is_err());
        assert!("a| |c".parse::<EditRequest>().is_err());
        assert_eq!("a | b | c".parse::<EditRequest>().unwrap().object, "c");
    }
}
