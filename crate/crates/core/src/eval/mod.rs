//! Edit, evaluate, revert: one case at a time.

mod remote;
mod subject;

pub use remote::{serve_subject, RemoteSubject, SubjectServer, RUN_TOKEN_HEADER};
pub use subject::{SubjectError, SubjectModel, SymbolicSubject};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chain::{expand, EditBatch, EditRequest, ExpansionConfig};
use crate::dataset::{BenchmarkCase, Metric};
use crate::dsl::RuleSet;
use crate::oracle::KnowledgeOracle;
use crate::store::MetaTable;

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// True when some alias occurs in `answer` as a run of whole tokens,
/// ignoring case and punctuation.
pub fn score_answer(answer: &str, gold_aliases: &[String]) -> bool {
    let have = tokens(answer);
    gold_aliases.iter().any(|alias| {
        let want = tokens(alias);
        !want.is_empty() && have.windows(want.len()).any(|w| w == want.as_slice())
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub expansion: ExpansionConfig,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub correct: usize,
    pub evaluated: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub metric: Metric,
    pub prompt: String,
    pub answer: String,
    pub correct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case_id: String,
    pub batch_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub queries: Vec<QueryOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// `rules`, `none` or `batches`.
    pub batch_source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ruleset_hash: Option<String>,
    pub config: EvalConfig,
    pub case_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Metrics without evaluated queries are absent.
    pub metrics: BTreeMap<Metric, MetricScore>,
    pub evaluated_queries: usize,
    pub errored_cases: usize,
    pub cases: Vec<CaseOutcome>,
    pub manifest: RunManifest,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("reports cover different queries: {0}")]
    Coverage(String),
    #[error("malformed report: {0}")]
    Format(String),
}

pub fn ruleset_hash(rules: &RuleSet) -> String {
    hex::encode(Sha256::digest(rules.to_json().as_bytes()))
}

/// Runs every case: build its batch (by expansion when `rules` is given,
/// otherwise the edit alone), apply, ask every query, score, revert.
pub fn evaluate(
    cases: &[BenchmarkCase],
    subject: &mut dyn SubjectModel,
    rules: Option<&RuleSet>,
    oracle: &dyn KnowledgeOracle,
    meta: &MetaTable,
    cfg: &EvalConfig,
) -> MetricReport {
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        batch_source: if rules.is_some() { "rules" } else { "none" }.to_string(),
        ruleset_hash: rules.map(ruleset_hash),
        config: cfg.clone(),
        case_count: cases.len(),
    };
    run(cases, subject, manifest, |case| match rules {
        Some(r) => expand(&case.edit, r, oracle, meta, &cfg.expansion).map_err(|e| e.to_string()),
        None => Ok(EditBatch::original_only(case.edit.clone())),
    })
}

/// Like [`evaluate`] with batches prepared beforehand, matched to cases by
/// their original edit.
pub fn evaluate_batches(
    cases: &[BenchmarkCase],
    subject: &mut dyn SubjectModel,
    batches: &[EditBatch],
    cfg: &EvalConfig,
) -> MetricReport {
    let by_edit: HashMap<&EditRequest, &EditBatch> = batches.iter().map(|b| (&b.original, b)).collect();
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        batch_source: "batches".to_string(),
        ruleset_hash: None,
        config: cfg.clone(),
        case_count: cases.len(),
    };
    run(cases, subject, manifest, |case| {
        by_edit
            .get(&case.edit)
            .map(|b| (*b).clone())
            .ok_or_else(|| format!("no batch for edit {}", case.edit))
    })
}

fn run(
    cases: &[BenchmarkCase],
    subject: &mut dyn SubjectModel,
    manifest: RunManifest,
    mut batch_for: impl FnMut(&BenchmarkCase) -> Result<EditBatch, String>,
) -> MetricReport {
    let mut outcomes = Vec::with_capacity(cases.len());
    for case in cases {
        let mut outcome = CaseOutcome {
            case_id: case.case_id.clone(),
            batch_size: 0,
            error: None,
            queries: Vec::new(),
        };
        let result = batch_for(case).and_then(|batch| {
            outcome.batch_size = batch.len();
            run_case(case, &batch, subject)
        });
        match result {
            Ok(q) => outcome.queries = q,
            Err(e) => outcome.error = Some(e),
        }
        outcomes.push(outcome);
    }
    tally(outcomes, manifest)
}

fn run_case(
    case: &BenchmarkCase,
    batch: &EditBatch,
    subject: &mut dyn SubjectModel,
) -> Result<Vec<QueryOutcome>, String> {
    subject.apply_batch(batch).map_err(|e| format!("apply: {e}"))?;
    let mut out = Vec::with_capacity(case.queries.len());
    let mut failure = None;
    for q in &case.queries {
        match subject.query(&q.prompt) {
            Ok(answer) => out.push(QueryOutcome {
                metric: q.metric,
                prompt: q.prompt.clone(),
                correct: score_answer(&answer, &q.gold_aliases()),
                answer,
            }),
            Err(e) => {
                failure = Some(format!("query: {e}"));
                break;
            }
        }
    }
    let reverted = subject.revert().map_err(|e| format!("revert: {e}"));
    match (failure, reverted) {
        (Some(f), _) => Err(f),
        (None, Err(r)) => Err(r),
        (None, Ok(())) => Ok(out),
    }
}

fn tally(cases: Vec<CaseOutcome>, manifest: RunManifest) -> MetricReport {
    let mut counts: BTreeMap<Metric, (usize, usize)> = BTreeMap::new();
    for q in cases.iter().filter(|c| c.error.is_none()).flat_map(|c| &c.queries) {
        let e = counts.entry(q.metric).or_default();
        e.0 += usize::from(q.correct);
        e.1 += 1;
    }
    let metrics = counts
        .into_iter()
        .map(|(m, (correct, evaluated))| {
            (
                m,
                MetricScore {
                    correct,
                    evaluated,
                    accuracy: correct as f64 / evaluated as f64,
                },
            )
        })
        .collect::<BTreeMap<_, _>>();
    MetricReport {
        evaluated_queries: metrics.values().map(|s| s.evaluated).sum(),
        errored_cases: cases.iter().filter(|c| c.error.is_some()).count(),
        metrics,
        cases,
        manifest,
    }
}

impl MetricReport {
    pub fn accuracy(&self, m: Metric) -> Option<f64> {
        self.metrics.get(&m).map(|s| s.accuracy)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Format(e.to_string()))
    }

    fn coverage(&self) -> BTreeSet<(String, Metric, String)> {
        self.cases
            .iter()
            .filter(|c| c.error.is_none())
            .flat_map(|c| c.queries.iter().map(|q| (c.case_id.clone(), q.metric, q.prompt.clone())))
            .collect()
    }

    /// Percentages in the column order Reliability, LG, RE, SA, RS, FF.
    pub fn render_table(&self) -> String {
        let mut out = header();
        out.push_str(&row("accuracy", |m| self.accuracy(m).map(|a| format!("{:.1}", a * 100.0))));
        let _ = writeln!(
            out,
            "{} queries evaluated, {} case(s) errored",
            self.evaluated_queries, self.errored_cases
        );
        out
    }
}

fn header() -> String {
    let mut s = format!("{:<10}", "");
    for m in Metric::ALL {
        let name = if m == Metric::LG { "LG*".to_string() } else { m.short().to_string() };
        let _ = write!(s, "{name:>12}");
    }
    s.push('\n');
    s
}

fn row(label: &str, cell: impl Fn(Metric) -> Option<String>) -> String {
    let mut s = format!("{label:<10}");
    for m in Metric::ALL {
        let _ = write!(s, "{:>12}", cell(m).unwrap_or_else(|| "-".to_string()));
    }
    s.push('\n');
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub metric: Metric,
    pub without: Option<f64>,
    pub with: Option<f64>,
    /// Percentage points.
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<DeltaRow>,
}

/// Per-metric change from `without` to `with`. Both reports must have
/// scored the same queries.
pub fn compare_reports(with: &MetricReport, without: &MetricReport) -> Result<Comparison, EvalError> {
    let (a, b) = (with.coverage(), without.coverage());
    if a != b {
        let only_with = a.difference(&b).count();
        let only_without = b.difference(&a).count();
        return Err(EvalError::Coverage(format!(
            "{only_with} quer(ies) only in the first report, {only_without} only in the second"
        )));
    }
    let rows = Metric::ALL
        .iter()
        .map(|&m| {
            let (w, wo) = (with.accuracy(m), without.accuracy(m));
            DeltaRow {
                metric: m,
                without: wo,
                with: w,
                delta: w.zip(wo).map(|(x, y)| (x - y) * 100.0),
            }
        })
        .collect();
    Ok(Comparison { rows })
}

impl Comparison {
    pub fn delta(&self, m: Metric) -> Option<f64> {
        self.rows.iter().find(|r| r.metric == m).and_then(|r| r.delta)
    }

    pub fn render_table(&self) -> String {
        let pct = |v: Option<f64>| v.map(|a| format!("{:.1}", a * 100.0));
        let get = |m: Metric| self.rows.iter().find(|r| r.metric == m);
        let mut out = header();
        out.push_str(&row("w/o ours", |m| pct(get(m).and_then(|r| r.without))));
        out.push_str(&row("w/ ours", |m| pct(get(m).and_then(|r| r.with))));
        out.push_str(&row("delta", |m| get(m).and_then(|r| r.delta).map(|d| format!("{d:+.1}"))));
        out
    }
}
