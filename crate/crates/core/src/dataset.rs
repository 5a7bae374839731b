//! Ripple-effect benchmark cases and the oracle-adaptive variants.
//!
//! Input follows the public release layout: a JSON array of cases, each with
//! an `edit` and one list of test groups per metric. A test query may carry
//! an optional `chain` of intermediate facts its gold answer depends on.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::chain::EditRequest;
use crate::oracle::{normalize_answer, AnswerStatus, KnowledgeOracle, KnowledgeQuery, OracleError};
use crate::store::{MetaError, MetaTable, RelationId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    Reliability,
    LG,
    RE,
    SA,
    RS,
    FF,
}

impl Metric {
    pub const ALL: [Metric; 6] = [Metric::Reliability, Metric::LG, Metric::RE, Metric::SA, Metric::RS, Metric::FF];

    /// Group key written to output files.
    pub fn group_key(self) -> &'static str {
        match self {
            Metric::Reliability => "Reliability",
            Metric::LG => "Logical_Generalization",
            Metric::RE => "Reasoning",
            Metric::SA => "Subject_Aliasing",
            Metric::RS => "Relation_Specificity",
            Metric::FF => "Forgetfulness",
        }
    }

    /// Recognizes every spelling used by the public release and its
    /// derivatives. Compositionality I and II both count as reasoning.
    pub fn from_group_key(key: &str) -> Option<Metric> {
        Some(match key {
            "Reliability" => Metric::Reliability,
            "Logical_Generalization" | "LG" => Metric::LG,
            "Compositionality_I" | "Compositionality_II" | "CI" | "CII" | "Reasoning" | "RE" => Metric::RE,
            "Subject_Aliasing" | "SA" => Metric::SA,
            "Relation_Specificity" | "RS" => Metric::RS,
            "Forgetfulness" | "Preservation" | "FF" => Metric::FF,
            _ => return None,
        })
    }

    pub fn short(self) -> &'static str {
        match self {
            Metric::Reliability => "Reliability",
            Metric::LG => "LG",
            Metric::RE => "RE",
            Metric::SA => "SA",
            Metric::RS => "RS",
            Metric::FF => "FF",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

const NON_METRIC_KEYS: [&str; 4] = ["example_type", "edit", "variant", "case_id"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    #[default]
    Original,
    Filtered,
    Replaced,
    InPrompt,
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VariantKind::Original => "original",
            VariantKind::Filtered => "filtered",
            VariantKind::Replaced => "replaced",
            VariantKind::InPrompt => "in_prompt",
        })
    }
}

impl FromStr for VariantKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "original" => Ok(VariantKind::Original),
            "filtered" => Ok(VariantKind::Filtered),
            "replaced" => Ok(VariantKind::Replaced),
            "in_prompt" | "in-prompt" => Ok(VariantKind::InPrompt),
            _ => Err(format!("unknown variant `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub value: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChainFact {
    pub subject: String,
    pub relation: RelationId,
    pub object: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestQuery {
    pub metric: Metric,
    /// Position of the test group within its metric list.
    pub group: usize,
    pub prompt: String,
    pub answers: Vec<Answer>,
    pub chain: Vec<ChainFact>,
}

impl TestQuery {
    /// Every accepted answer string: values then aliases.
    pub fn gold_aliases(&self) -> Vec<String> {
        self.answers
            .iter()
            .flat_map(|a| std::iter::once(a.value.clone()).chain(a.aliases.iter().cloned()))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchmarkCase {
    pub case_id: String,
    pub variant: VariantKind,
    pub example_type: Option<String>,
    pub edit: EditRequest,
    pub edit_prompt: Option<String>,
    pub queries: Vec<TestQuery>,
}

impl BenchmarkCase {
    pub fn queries_for(&self, metric: Metric) -> impl Iterator<Item = &TestQuery> {
        self.queries.iter().filter(move |q| q.metric == metric)
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("case {case}: {field}: {message}")]
    Schema { case: usize, field: String, message: String },
    #[error("dataset must be a JSON array of cases: {0}")]
    Format(String),
    #[error("case `{case_id}` is already an in_prompt variant")]
    AlreadyInPrompt { case_id: String },
    #[error("case `{case_id}`: {source}")]
    Meta {
        case_id: String,
        #[source]
        source: MetaError,
    },
    #[error("case `{case_id}`: {source}; progress so far is in the decision log")]
    Oracle {
        case_id: String,
        #[source]
        source: OracleError,
    },
    #[error("{path}: line {line}: {message}")]
    CorruptLog { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn load_cases(path: &Path) -> Result<Vec<BenchmarkCase>, DatasetError> {
    parse_cases(&fs::read_to_string(path).map_err(io_err(path))?)
}

pub fn parse_cases(text: &str) -> Result<Vec<BenchmarkCase>, DatasetError> {
    let root: Value = serde_json::from_str(text).map_err(|e| DatasetError::Format(e.to_string()))?;
    let Value::Array(items) = root else {
        return Err(DatasetError::Format("top level is not an array".to_string()));
    };
    items.iter().enumerate().map(|(i, v)| parse_case(i, v)).collect()
}

struct CaseCtx {
    case: usize,
}

impl CaseCtx {
    fn err(&self, field: impl Into<String>, message: impl Into<String>) -> DatasetError {
        DatasetError::Schema {
            case: self.case,
            field: field.into(),
            message: message.into(),
        }
    }

    fn string(&self, obj: &Map<String, Value>, key: &str, at: &str) -> Result<String, DatasetError> {
        match obj.get(key) {
            Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
            Some(Value::String(_)) => Err(self.err(format!("{at}.{key}"), "must be non-empty")),
            Some(_) => Err(self.err(format!("{at}.{key}"), "must be a string")),
            None => Err(self.err(format!("{at}.{key}"), "is required")),
        }
    }

    fn opt_string(&self, obj: &Map<String, Value>, key: &str, at: &str) -> Result<Option<String>, DatasetError> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.err(format!("{at}.{key}"), "must be a string")),
        }
    }
}

fn parse_case(index: usize, v: &Value) -> Result<BenchmarkCase, DatasetError> {
    let cx = CaseCtx { case: index };
    let obj = v.as_object().ok_or_else(|| cx.err("$", "case must be an object"))?;

    let edit_obj = obj
        .get("edit")
        .ok_or_else(|| cx.err("edit", "is required"))?
        .as_object()
        .ok_or_else(|| cx.err("edit", "must be an object"))?;
    let subject = cx.string(edit_obj, "subject", "edit")?;
    let relation = cx.string(edit_obj, "relation", "edit")?;
    let target = cx.string(edit_obj, "target", "edit")?;
    let edit_prompt = cx.opt_string(edit_obj, "prompt", "edit")?;
    let edit = EditRequest::new(subject, relation, target).map_err(|e| cx.err("edit", e.to_string()))?;

    let case_id = cx.opt_string(obj, "case_id", "$")?.unwrap_or_else(|| format!("case-{index}"));
    let example_type = cx.opt_string(obj, "example_type", "$")?;
    let variant = match cx.opt_string(obj, "variant", "$")? {
        Some(s) => s.parse().map_err(|e: String| cx.err("variant", e))?,
        None => VariantKind::Original,
    };

    let mut queries = Vec::new();
    // Metric groups in a stable order regardless of key order in the file.
    let mut keys: Vec<&String> = obj.keys().collect();
    keys.sort_by(|a, b| (Metric::from_group_key(a), a).cmp(&(Metric::from_group_key(b), b)));
    for key in keys {
        if NON_METRIC_KEYS.contains(&key.as_str()) {
            continue;
        }
        let metric = Metric::from_group_key(key).ok_or_else(|| cx.err(key.as_str(), "unknown metric tag"))?;
        let groups = obj[key.as_str()]
            .as_array()
            .ok_or_else(|| cx.err(key.as_str(), "must be a list of test groups"))?;
        let group_base = queries.iter().filter(|q: &&TestQuery| q.metric == metric).map(|q| q.group + 1).max().unwrap_or(0);
        for (g, group) in groups.iter().enumerate() {
            let at = format!("{key}[{g}]");
            let tq = group
                .get("test_queries")
                .and_then(Value::as_array)
                .ok_or_else(|| cx.err(format!("{at}.test_queries"), "must be a list"))?;
            for (qi, q) in tq.iter().enumerate() {
                let qat = format!("{at}.test_queries[{qi}]");
                queries.push(parse_query(&cx, q, &qat, metric, group_base + g)?);
            }
        }
    }

    if !queries.iter().any(|q| q.metric == Metric::Reliability) {
        let prompt = edit_prompt
            .as_deref()
            .ok_or_else(|| cx.err("Reliability", "no Reliability query and no edit.prompt to derive one from"))?;
        queries.insert(
            0,
            TestQuery {
                metric: Metric::Reliability,
                group: 0,
                prompt: strip_target(prompt, &edit.object),
                answers: vec![Answer {
                    value: edit.object.clone(),
                    aliases: Vec::new(),
                }],
                chain: Vec::new(),
            },
        );
    }

    Ok(BenchmarkCase {
        case_id,
        variant,
        example_type,
        edit,
        edit_prompt,
        queries,
    })
}

/// "The spouse of Carol is Mary." with target Mary gives "The spouse of Carol is".
fn strip_target(prompt: &str, target: &str) -> String {
    let p = prompt.trim().trim_end_matches('.').trim_end();
    p.strip_suffix(target).map(str::trim_end).unwrap_or(p).to_string()
}

fn parse_query(cx: &CaseCtx, q: &Value, at: &str, metric: Metric, group: usize) -> Result<TestQuery, DatasetError> {
    let obj = q.as_object().ok_or_else(|| cx.err(at, "must be an object"))?;
    let prompt = cx.string(obj, "prompt", at)?;
    let answers_v = obj
        .get("answers")
        .and_then(Value::as_array)
        .ok_or_else(|| cx.err(format!("{at}.answers"), "must be a list"))?;
    if answers_v.is_empty() {
        return Err(cx.err(format!("{at}.answers"), "must be non-empty"));
    }
    let mut answers = Vec::new();
    for (ai, a) in answers_v.iter().enumerate() {
        let aat = format!("{at}.answers[{ai}]");
        let answer = match a {
            Value::String(s) => Answer {
                value: s.clone(),
                aliases: Vec::new(),
            },
            Value::Object(o) => {
                let value = cx.string(o, "value", &aat)?;
                let aliases = match o.get("aliases") {
                    None | Some(Value::Null) => Vec::new(),
                    Some(Value::Array(xs)) => xs
                        .iter()
                        .enumerate()
                        .map(|(k, x)| {
                            x.as_str()
                                .map(str::to_string)
                                .ok_or_else(|| cx.err(format!("{aat}.aliases[{k}]"), "must be a string"))
                        })
                        .collect::<Result<_, _>>()?,
                    Some(_) => return Err(cx.err(format!("{aat}.aliases"), "must be a list")),
                };
                Answer { value, aliases }
            }
            _ => return Err(cx.err(aat, "must be an object or a string")),
        };
        answers.push(answer);
    }
    let chain = match obj.get("chain") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(facts)) => facts
            .iter()
            .enumerate()
            .map(|(fi, f)| {
                let fat = format!("{at}.chain[{fi}]");
                let fo = f.as_object().ok_or_else(|| cx.err(&fat, "must be an object"))?;
                Ok(ChainFact {
                    subject: cx.string(fo, "subject", &fat)?,
                    relation: cx.string(fo, "relation", &fat)?.into(),
                    object: cx.string(fo, "object", &fat)?,
                })
            })
            .collect::<Result<_, DatasetError>>()?,
        Some(_) => return Err(cx.err(format!("{at}.chain"), "must be a list")),
    };
    Ok(TestQuery {
        metric,
        group,
        prompt,
        answers,
        chain,
    })
}

pub fn cases_to_json(cases: &[BenchmarkCase]) -> String {
    let arr: Vec<Value> = cases.iter().map(case_to_value).collect();
    serde_json::to_string_pretty(&arr).expect("cases serialize") + "\n"
}

pub fn save_cases(cases: &[BenchmarkCase], path: &Path) -> Result<(), DatasetError> {
    fs::write(path, cases_to_json(cases)).map_err(io_err(path))
}

fn case_to_value(c: &BenchmarkCase) -> Value {
    let mut obj = Map::new();
    obj.insert("case_id".into(), Value::String(c.case_id.clone()));
    obj.insert("variant".into(), serde_json::to_value(c.variant).expect("variant"));
    if let Some(t) = &c.example_type {
        obj.insert("example_type".into(), Value::String(t.clone()));
    }
    let mut edit = Map::new();
    edit.insert("subject".into(), Value::String(c.edit.subject.clone()));
    edit.insert("relation".into(), Value::String(c.edit.relation.to_string()));
    edit.insert("target".into(), Value::String(c.edit.object.clone()));
    if let Some(p) = &c.edit_prompt {
        edit.insert("prompt".into(), Value::String(p.clone()));
    }
    obj.insert("edit".into(), Value::Object(edit));
    for metric in Metric::ALL {
        let mut groups: BTreeMap<usize, Vec<Value>> = BTreeMap::new();
        for q in c.queries_for(metric) {
            let mut qo = Map::new();
            qo.insert("prompt".into(), Value::String(q.prompt.clone()));
            qo.insert("answers".into(), serde_json::to_value(&q.answers).expect("answers"));
            if !q.chain.is_empty() {
                qo.insert("chain".into(), serde_json::to_value(&q.chain).expect("chain"));
            }
            groups.entry(q.group).or_default().push(Value::Object(qo));
        }
        if groups.is_empty() {
            continue;
        }
        let list = groups
            .into_values()
            .map(|qs| serde_json::json!({ "test_queries": qs }))
            .collect();
        obj.insert(metric.group_key().into(), Value::Array(list));
    }
    Value::Object(obj)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Kept,
    Dropped,
    Rewritten,
}

/// One oracle check made on a chain fact.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub subject: String,
    pub relation: RelationId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<String>,
    pub answer: Option<String>,
    pub status: AnswerStatus,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub variant: VariantKind,
    pub case_id: String,
    /// Position of the query within its case.
    pub query_index: usize,
    pub metric: Metric,
    pub action: Action,
    #[serde(default)]
    pub evidence: Vec<Evidence>,
    /// New gold (replaced) or new prompt (in_prompt).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewritten_to: Option<String>,
}

type DecisionKey = (VariantKind, String, usize);

/// Per-query record of what a builder did. When backed by a file, entries
/// are appended as they are made and reused when the build is rerun.
#[derive(Default)]
pub struct DecisionLog {
    entries: Vec<Decision>,
    index: HashMap<DecisionKey, usize>,
    sink: Option<(PathBuf, BufWriter<File>)>,
}

impl fmt::Debug for DecisionLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DecisionLog").field("entries", &self.entries.len()).finish()
    }
}

impl DecisionLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens or creates a log file; existing entries count as progress.
    pub fn open(path: &Path) -> Result<Self, DatasetError> {
        let mut log = Self::default();
        if path.exists() {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let d: Decision = serde_json::from_str(line).map_err(|e| DatasetError::CorruptLog {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                log.remember(d);
            }
        }
        let f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
        log.sink = Some((path.to_path_buf(), BufWriter::new(f)));
        Ok(log)
    }

    pub fn entries(&self) -> &[Decision] {
        &self.entries
    }

    pub fn count(&self, variant: VariantKind, action: Action) -> usize {
        self.entries
            .iter()
            .filter(|d| d.variant == variant && d.action == action)
            .count()
    }

    fn lookup(&self, variant: VariantKind, case_id: &str, query_index: usize) -> Option<&Decision> {
        self.index
            .get(&(variant, case_id.to_string(), query_index))
            .map(|&i| &self.entries[i])
    }

    fn remember(&mut self, d: Decision) {
        let key = (d.variant, d.case_id.clone(), d.query_index);
        match self.index.get(&key) {
            Some(&i) => self.entries[i] = d,
            None => {
                self.index.insert(key, self.entries.len());
                self.entries.push(d);
            }
        }
    }

    fn record(&mut self, d: Decision) -> Result<(), DatasetError> {
        if let Some((path, w)) = self.sink.as_mut() {
            let line = serde_json::to_string(&d).expect("decision serializes");
            writeln!(w, "{line}").and_then(|_| w.flush()).map_err(io_err(path))?;
        }
        self.remember(d);
        Ok(())
    }
}

/// Alias-normalized, case-insensitive equality.
pub fn same_entity(a: &str, b: &str) -> bool {
    let (a, b) = (normalize_answer(a), normalize_answer(b));
    !a.is_empty() && a.to_lowercase() == b.to_lowercase()
}

fn ask(
    oracle: &dyn KnowledgeOracle,
    meta: &MetaTable,
    case_id: &str,
    subject: &str,
    relation: &RelationId,
) -> Result<Evidence, DatasetError> {
    let m = meta.get(relation).map_err(|source| DatasetError::Meta {
        case_id: case_id.to_string(),
        source,
    })?;
    let a = oracle
        .answer_query(&KnowledgeQuery::new(subject, relation.clone()), &m)
        .map_err(|source| DatasetError::Oracle {
            case_id: case_id.to_string(),
            source,
        })?;
    Ok(Evidence {
        subject: subject.to_string(),
        relation: relation.clone(),
        expected: None,
        answer: a.entity,
        status: a.status,
    })
}

/// Keeps a chained query only when the oracle confirms every chain fact.
pub fn build_filtered(
    cases: &[BenchmarkCase],
    oracle: &dyn KnowledgeOracle,
    meta: &MetaTable,
    log: &mut DecisionLog,
) -> Result<Vec<BenchmarkCase>, DatasetError> {
    let variant = VariantKind::Filtered;
    let mut out = Vec::with_capacity(cases.len());
    for case in cases {
        let mut kept = Vec::new();
        for (qi, q) in case.queries.iter().enumerate() {
            let action = match log.lookup(variant, &case.case_id, qi) {
                Some(d) => d.action,
                None => {
                    let mut evidence = Vec::new();
                    let mut agrees = true;
                    for fact in &q.chain {
                        let mut e = ask(oracle, meta, &case.case_id, &fact.subject, &fact.relation)?;
                        e.expected = Some(fact.object.clone());
                        let ok = e.status == AnswerStatus::Answered
                            && e.answer.as_deref().is_some_and(|a| same_entity(a, &fact.object));
                        evidence.push(e);
                        if !ok {
                            agrees = false;
                            break;
                        }
                    }
                    let action = if agrees { Action::Kept } else { Action::Dropped };
                    log.record(Decision {
                        variant,
                        case_id: case.case_id.clone(),
                        query_index: qi,
                        metric: q.metric,
                        action,
                        evidence,
                        rewritten_to: None,
                    })?;
                    action
                }
            };
            if action != Action::Dropped {
                kept.push(q.clone());
            }
        }
        if !kept.is_empty() {
            out.push(BenchmarkCase {
                variant,
                queries: kept,
                ..case.clone()
            });
        }
    }
    Ok(out)
}

/// Re-walks each chain through the oracle and makes the terminal answer the
/// gold. A chain fact restating the edit takes the edit's object instead of
/// asking. Queries with an unanswered hop are dropped.
pub fn build_replaced(
    cases: &[BenchmarkCase],
    oracle: &dyn KnowledgeOracle,
    meta: &MetaTable,
    log: &mut DecisionLog,
) -> Result<Vec<BenchmarkCase>, DatasetError> {
    let variant = VariantKind::Replaced;
    let mut out = Vec::with_capacity(cases.len());
    for case in cases {
        let mut kept = Vec::new();
        for (qi, q) in case.queries.iter().enumerate() {
            if q.chain.is_empty() {
                kept.push(q.clone());
                continue;
            }
            let decision = match log.lookup(variant, &case.case_id, qi) {
                Some(d) => d.clone(),
                None => {
                    let d = rewalk(case, qi, q, oracle, meta)?;
                    log.record(d.clone())?;
                    d
                }
            };
            match (decision.action, decision.rewritten_to) {
                (Action::Dropped, _) => {}
                (_, Some(gold)) => kept.push(TestQuery {
                    answers: vec![Answer {
                        value: gold,
                        aliases: Vec::new(),
                    }],
                    ..q.clone()
                }),
                (_, None) => kept.push(q.clone()),
            }
        }
        if !kept.is_empty() {
            out.push(BenchmarkCase {
                variant,
                queries: kept,
                ..case.clone()
            });
        }
    }
    Ok(out)
}

fn rewalk(
    case: &BenchmarkCase,
    qi: usize,
    q: &TestQuery,
    oracle: &dyn KnowledgeOracle,
    meta: &MetaTable,
) -> Result<Decision, DatasetError> {
    let mut evidence = Vec::new();
    let mut current: Option<String> = None;
    let mut dropped = false;
    for (i, fact) in q.chain.iter().enumerate() {
        let subject = current.clone().unwrap_or_else(|| fact.subject.clone());
        if i == 0 && same_entity(&subject, &case.edit.subject) && fact.relation == case.edit.relation {
            current = Some(case.edit.object.clone());
            continue;
        }
        let mut e = ask(oracle, meta, &case.case_id, &subject, &fact.relation)?;
        e.expected = Some(fact.object.clone());
        let next = e.answer.clone();
        let answered = e.status == AnswerStatus::Answered;
        evidence.push(e);
        match next {
            Some(a) if answered => current = Some(a),
            _ => {
                dropped = true;
                break;
            }
        }
    }
    let (action, rewritten_to) = if dropped {
        (Action::Dropped, None)
    } else {
        (Action::Rewritten, current)
    };
    Ok(Decision {
        variant: VariantKind::Replaced,
        case_id: case.case_id.clone(),
        query_index: qi,
        metric: q.metric,
        action,
        evidence,
        rewritten_to,
    })
}

/// Prompt with the chain facts stated up front.
pub fn in_prompt_text(facts: &[String], prompt: &str) -> String {
    format!(
        "Given the following information: {}; Complete the following sentence: {prompt}",
        facts.join("; ")
    )
}

/// Rewrites each chained prompt to state its chain facts first. No oracle
/// calls are made.
pub fn build_in_prompt(
    cases: &[BenchmarkCase],
    meta: &MetaTable,
    log: &mut DecisionLog,
) -> Result<Vec<BenchmarkCase>, DatasetError> {
    let variant = VariantKind::InPrompt;
    if let Some(c) = cases.iter().find(|c| c.variant == variant) {
        return Err(DatasetError::AlreadyInPrompt {
            case_id: c.case_id.clone(),
        });
    }
    let mut out = Vec::with_capacity(cases.len());
    for case in cases {
        let mut queries = Vec::with_capacity(case.queries.len());
        for (qi, q) in case.queries.iter().enumerate() {
            if q.chain.is_empty() {
                queries.push(q.clone());
                continue;
            }
            let facts = q
                .chain
                .iter()
                .map(|f| {
                    meta.get(&f.relation)
                        .map(|m| m.sentence(&f.subject, &f.object))
                        .map_err(|source| DatasetError::Meta {
                            case_id: case.case_id.clone(),
                            source,
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let prompt = in_prompt_text(&facts, &q.prompt);
            log.record(Decision {
                variant,
                case_id: case.case_id.clone(),
                query_index: qi,
                metric: q.metric,
                action: Action::Rewritten,
                evidence: Vec::new(),
                rewritten_to: Some(prompt.clone()),
            })?;
            queries.push(TestQuery { prompt, ..q.clone() });
        }
        out.push(BenchmarkCase {
            variant,
            queries,
            ..case.clone()
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::StoreOracle;
    use crate::store::TripleStore;
    use std::sync::Arc;

    const ONE: &str = r#"[{
      "edit": {"subject": "Alice", "relation": "father", "target": "Carol",
               "prompt": "The father of Alice is Carol."},
      "Logical_Generalization": [{"test_queries": [{
          "prompt": "The mother of Alice is",
          "answers": [{"value": "Mary", "aliases": ["Mary Smith"]}],
          "chain": [{"subject": "Carol", "relation": "spouse", "object": "Mary"}]}]}],
      "Compositionality_I": [{"test_queries": [{"prompt": "p", "answers": ["x"]}]}]
    }]"#;

    #[test]
    fn loads_and_synthesizes_reliability() {
        let cases = parse_cases(ONE).unwrap();
        let c = &cases[0];
        assert_eq!(c.case_id, "case-0");
        assert_eq!(c.queries[0].metric, Metric::Reliability);
        assert_eq!(c.queries[0].prompt, "The father of Alice is");
        assert_eq!(c.queries_for(Metric::RE).count(), 1);
        assert_eq!(c.queries_for(Metric::LG).next().unwrap().gold_aliases(), vec!["Mary", "Mary Smith"]);
    }

    #[test]
    fn schema_errors_carry_path() {
        let bad = ONE.replace(r#""answers": ["x"]"#, r#""answers": []"#);
        let err = parse_cases(&bad).unwrap_err().to_string();
        assert_eq!(err, "case 0: Compositionality_I[0].test_queries[0].answers: must be non-empty");
        let unknown = ONE.replace("Compositionality_I", "Vibes");
        assert!(parse_cases(&unknown).unwrap_err().to_string().contains("unknown metric tag"));
        let no_rel = r#"[{"edit": {"subject": "a", "relation": "b", "target": "c"}}]"#;
        assert!(parse_cases(no_rel).unwrap_err().to_string().contains("Reliability"));
    }

    #[test]
    fn round_trip() {
        let cases = parse_cases(ONE).unwrap();
        assert_eq!(parse_cases(&cases_to_json(&cases)).unwrap(), cases);
    }

    fn oracle(rows: &[(&str, &str, &str)]) -> StoreOracle {
        StoreOracle::new(Arc::new(TripleStore::from_triples(rows.iter().copied(), &HashMap::new())))
    }

    #[test]
    fn variants() {
        let cases = parse_cases(ONE).unwrap();
        let meta = MetaTable::with_fallback();
        let agree = oracle(&[("Carol", "spouse", "Mary")]);
        let disagree = oracle(&[("Carol", "spouse", "Jane")]);

        let mut log = DecisionLog::in_memory();
        assert_eq!(build_filtered(&cases, &agree, &meta, &mut log).unwrap()[0].queries.len(), 3);
        let mut log = DecisionLog::in_memory();
        let f = build_filtered(&cases, &disagree, &meta, &mut log).unwrap();
        assert_eq!(f[0].queries.len(), 2);
        assert_eq!(log.count(VariantKind::Filtered, Action::Dropped), 1);

        let mut log = DecisionLog::in_memory();
        let r = build_replaced(&cases, &disagree, &meta, &mut log).unwrap();
        assert_eq!(r[0].queries_for(Metric::LG).next().unwrap().gold_aliases(), vec!["Jane"]);

        let mut log = DecisionLog::in_memory();
        let p = build_in_prompt(&cases, &meta, &mut log).unwrap();
        assert_eq!(
            p[0].queries_for(Metric::LG).next().unwrap().prompt,
            "Given the following information: The spouse of Carol is Mary; Complete the following sentence: The mother of Alice is"
        );
        assert!(matches!(
            build_in_prompt(&p, &meta, &mut log),
            Err(DatasetError::AlreadyInPrompt { .. })
        ));
    }

    #[test]
    fn replaced_uses_edit_for_first_hop() {
        let text = r#"[{
          "edit": {"subject": "X", "relation": "graduated_from", "target": "Y University"},
          "Reliability": [{"test_queries": [{"prompt": "X graduated from", "answers": ["Y University"]}]}],
          "Compositionality_II": [{"test_queries": [{
              "prompt": "The city X studied in is",
              "answers": ["Z"],
              "chain": [{"subject": "X", "relation": "graduated_from", "object": "Y University"},
                        {"subject": "Y University", "relation": "located_in", "object": "Z"}]}]}]
        }]"#;
        let cases = parse_cases(text).unwrap();
        let o = oracle(&[("X", "graduated_from", "Old U"), ("Y University", "located_in", "E")]);
        let mut log = DecisionLog::in_memory();
        let r = build_replaced(&cases, &o, &MetaTable::with_fallback(), &mut log).unwrap();
        assert_eq!(r[0].queries_for(Metric::RE).next().unwrap().gold_aliases(), vec!["E"]);
    }

    #[test]
    fn file_log_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let cases = parse_cases(ONE).unwrap();
        let meta = MetaTable::with_fallback();
        {
            let mut log = DecisionLog::open(&path).unwrap();
            build_filtered(&cases, &oracle(&[("Carol", "spouse", "Jane")]), &meta, &mut log).unwrap();
        }
        // An oracle that would now agree is not consulted again.
        let mut log = DecisionLog::open(&path).unwrap();
        let f = build_filtered(&cases, &oracle(&[("Carol", "spouse", "Mary")]), &meta, &mut log).unwrap();
        assert_eq!(f[0].queries.len(), 2);
    }
}
