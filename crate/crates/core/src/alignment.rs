//! Filtering mined rules through an oracle's judgment.
//!
//! Every candidate is verbalized and judged once. Accepted rules are those
//! labeled `True` or `Usually True`. Judgments are appended to a JSONL report
//! as they arrive, so an interrupted run leaves a usable partial report that
//! [`resume_alignment`] picks up without re-asking the oracle.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::verbalize_rule;
use crate::miner::CandidateRule;
use crate::oracle::{ConfidenceLabel, KnowledgeOracle, OracleError};
use crate::store::{MetaError, MetaTable};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub rule_id: String,
    pub verbalization: String,
    pub rationale: String,
    pub label: ConfidenceLabel,
    pub timestamp: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AlignmentOutcome {
    /// Accepted candidates, in input order.
    pub accepted: Vec<CandidateRule>,
    /// One record per distinct rule id, in input order.
    pub records: Vec<JudgmentRecord>,
    /// Judge calls made by this run.
    pub oracle_calls: usize,
}

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("rule `{rule_id}`: {source}")]
    Meta {
        rule_id: String,
        #[source]
        source: MetaError,
    },
    #[error("rule `{rule_id}`: {source}")]
    Oracle {
        rule_id: String,
        #[source]
        source: OracleError,
    },
    #[error("{path}: line {line}: {message}")]
    CorruptReport { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Judges every candidate, starting a fresh report when `report` is given.
pub fn align_rules(
    candidates: &[CandidateRule],
    oracle: &dyn KnowledgeOracle,
    meta: &MetaTable,
    report: Option<&Path>,
) -> Result<AlignmentOutcome, AlignError> {
    if let Some(path) = report {
        File::create(path).map_err(io_err(path))?;
    }
    run(candidates, oracle, meta, report, HashMap::new())
}

/// Like [`align_rules`], but rules already present in `report` are not
/// judged again. A missing report file is treated as empty.
pub fn resume_alignment(
    candidates: &[CandidateRule],
    oracle: &dyn KnowledgeOracle,
    meta: &MetaTable,
    report: &Path,
) -> Result<AlignmentOutcome, AlignError> {
    let prior = if report.exists() {
        read_report(report)?
            .into_iter()
            .map(|r| (r.rule_id.clone(), r))
            .collect()
    } else {
        HashMap::new()
    };
    run(candidates, oracle, meta, Some(report), prior)
}

pub fn read_report(path: &Path) -> Result<Vec<JudgmentRecord>, AlignError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| AlignError::CorruptReport {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn run(
    candidates: &[CandidateRule],
    oracle: &dyn KnowledgeOracle,
    meta: &MetaTable,
    report: Option<&Path>,
    mut judged: HashMap<String, JudgmentRecord>,
) -> Result<AlignmentOutcome, AlignError> {
    let mut sink = match report {
        Some(path) => Some(BufWriter::new(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(io_err(path))?,
        )),
        None => None,
    };

    let mut outcome = AlignmentOutcome::default();
    let mut order = Vec::new();
    for rule in candidates {
        let rule_id = rule.rule_id();
        if !judged.contains_key(&rule_id) {
            let verbalization = verbalize_rule(rule, meta).map_err(|source| AlignError::Meta {
                rule_id: rule_id.clone(),
                source,
            })?;
            outcome.oracle_calls += 1;
            let j = oracle.judge_rule(&verbalization).map_err(|source| AlignError::Oracle {
                rule_id: rule_id.clone(),
                source,
            })?;
            let record = JudgmentRecord {
                rule_id: rule_id.clone(),
                verbalization,
                rationale: j.rationale,
                label: j.label,
                timestamp: timestamp(),
            };
            if let (Some(w), Some(path)) = (sink.as_mut(), report) {
                append(w, &record).map_err(io_err(path))?;
            }
            judged.insert(rule_id.clone(), record);
        }
        if judged[&rule_id].label.accepts() {
            outcome.accepted.push(rule.clone());
        }
        if !order.contains(&rule_id) {
            order.push(rule_id);
        }
    }
    drop(sink);

    outcome.records = order.iter().map(|id| judged[id].clone()).collect();
    if let Some(path) = report {
        rewrite(path, &outcome.records).map_err(io_err(path))?;
    }
    Ok(outcome)
}

fn append(w: &mut BufWriter<File>, record: &JudgmentRecord) -> std::io::Result<()> {
    writeln!(w, "{}", serde_json::to_string(record).expect("record serializes"))?;
    w.flush()
}

fn rewrite(path: &Path, records: &[JudgmentRecord]) -> std::io::Result<()> {
    let tmp = PathBuf::from(format!("{}.tmp", path.display()));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        for r in records {
            writeln!(w, "{}", serde_json::to_string(r).expect("record serializes"))?;
        }
        w.flush()?;
    }
    fs::rename(tmp, path)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> AlignError + '_ {
    move |source| AlignError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// RFC 3339 UTC; pinned by `SOURCE_DATE_EPOCH` when set.
pub fn timestamp() -> String {
    let at = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| DateTime::<Utc>::from_timestamp(secs, 0))
        .unwrap_or_else(Utc::now);
    at.to_rfc3339_opts(SecondsFormat::Secs, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::miner::BodyStep;
    use crate::oracle::{Judgment, KnowledgeQuery, OracleAnswer};
    use crate::store::{RelationId, RelationMeta};
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Labels rules by head relation and fails after `budget` calls.
    struct Scripted {
        calls: AtomicUsize,
        budget: usize,
    }

    impl KnowledgeOracle for Scripted {
        fn answer_query(&self, _: &KnowledgeQuery, _: &RelationMeta) -> Result<OracleAnswer, OracleError> {
            unreachable!()
        }
        fn answer_inverse_query(&self, _: &RelationId, _: &str, _: &RelationMeta) -> Result<OracleAnswer, OracleError> {
            unreachable!()
        }
        fn judge_rule(&self, text: &str) -> Result<Judgment, OracleError> {
            if self.calls.fetch_add(1, Ordering::SeqCst) >= self.budget {
                return Err(OracleError::Transport {
                    attempts: 1,
                    message: "down".into(),
                });
            }
            let label = if text.contains("the mother of A") {
                ConfidenceLabel::True
            } else if text.contains("the citizenship of A") {
                ConfidenceLabel::UsuallyTrue
            } else {
                ConfidenceLabel::SometimesTrue
            };
            Ok(Judgment {
                rationale: "scripted".into(),
                label,
            })
        }
    }

    fn rules() -> Vec<CandidateRule> {
        let r = |head: &str, body: &[&str]| CandidateRule {
            head: head.into(),
            body: body.iter().map(|b| BodyStep::forward(*b)).collect(),
            support: 10,
            sample_size: 100,
        };
        vec![
            r("mother", &["father", "spouse"]),
            r("citizenship", &["birthplace", "country"]),
            r("sibling", &["father", "child"]),
        ]
    }

    #[test]
    fn accepts_top_two_labels() {
        let o = Scripted {
            calls: AtomicUsize::new(0),
            budget: usize::MAX,
        };
        let out = align_rules(&rules(), &o, &MetaTable::with_fallback(), None).unwrap();
        assert_eq!(out.accepted.len(), 2);
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.oracle_calls, 3);
    }

    #[test]
    fn interrupted_run_resumes_without_repeats() {
        let dir = tempfile::tempdir().unwrap();
        let report = dir.path().join("report.jsonl");
        let meta = MetaTable::with_fallback();
        let flaky = Scripted {
            calls: AtomicUsize::new(0),
            budget: 2,
        };
        assert!(matches!(
            align_rules(&rules(), &flaky, &meta, Some(&report)),
            Err(AlignError::Oracle { .. })
        ));
        assert_eq!(read_report(&report).unwrap().len(), 2);

        let healthy = Scripted {
            calls: AtomicUsize::new(0),
            budget: usize::MAX,
        };
        let out = resume_alignment(&rules(), &healthy, &meta, &report).unwrap();
        assert_eq!(out.oracle_calls, 1);
        assert_eq!(healthy.calls.load(Ordering::SeqCst), 1);
        let ids: Vec<_> = read_report(&report).unwrap().into_iter().map(|r| r.rule_id).collect();
        assert_eq!(ids, rules().iter().map(|r| r.rule_id()).collect::<Vec<_>>());
    }

    #[test]
    fn corrupt_report_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let report = dir.path().join("report.jsonl");
        fs::write(&report, "\nnot json\n").unwrap();
        let o = Scripted {
            calls: AtomicUsize::new(0),
            budget: 0,
        };
        let err = resume_alignment(&rules(), &o, &MetaTable::with_fallback(), &report).unwrap_err();
        assert!(matches!(err, AlignError::CorruptReport { line: 2, .. }), "{err}");
    }
}
