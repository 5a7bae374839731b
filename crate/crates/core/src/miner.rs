//! Candidate rule mining: inverse relations and 2/3-hop alternative paths.
//!
//! For a target relation `R`, a sample of `(a, R, b)` instances is drawn and
//! every relation sequence connecting `a` to `b` is collected. A sequence
//! counts at most once per sampled instance, whatever the number of
//! intermediate entities realizing it. Intermediate entities are distinct
//! from both endpoints and from each other.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{RelationId, TripleStore};

pub const CANDIDATES_FORMAT: &str = "chainedit-candidates/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Inverse,
}

impl Direction {
    fn tag(self) -> &'static str {
        match self {
            Direction::Forward => "fwd",
            Direction::Inverse => "inv",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BodyStep {
    pub relation: RelationId,
    pub direction: Direction,
}

impl BodyStep {
    pub fn forward(relation: impl Into<RelationId>) -> Self {
        Self {
            relation: relation.into(),
            direction: Direction::Forward,
        }
    }

    pub fn inverse(relation: impl Into<RelationId>) -> Self {
        Self {
            relation: relation.into(),
            direction: Direction::Inverse,
        }
    }
}

impl fmt::Display for BodyStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.direction.tag(), self.relation)
    }
}

/// `head <- body`, with the support observed while mining.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CandidateRule {
    pub head: RelationId,
    pub body: Vec<BodyStep>,
    pub support: usize,
    pub sample_size: usize,
}

impl CandidateRule {
    /// Stable identifier: the rule text without its statistics.
    pub fn rule_id(&self) -> String {
        let body: Vec<String> = self.body.iter().map(ToString::to_string).collect();
        format!("{} <- {}", self.head, body.join(", "))
    }

    pub fn key(&self) -> (&RelationId, &[BodyStep]) {
        (&self.head, &self.body)
    }
}

impl fmt::Display for CandidateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} | {}/{}", self.rule_id(), self.support, self.sample_size)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot parse candidate rule `{text}`: {reason}")]
pub struct RuleTextError {
    pub text: String,
    pub reason: &'static str,
}

impl FromStr for CandidateRule {
    type Err = RuleTextError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let err = |reason| RuleTextError {
            text: text.to_string(),
            reason,
        };
        let (rule, stats) = text.rsplit_once(" | ").ok_or_else(|| err("missing ` | support/sample`"))?;
        let (support, sample) = stats.trim().split_once('/').ok_or_else(|| err("missing `/`"))?;
        let support = support.parse().map_err(|_| err("bad support"))?;
        let sample_size = sample.parse().map_err(|_| err("bad sample size"))?;
        let (head, body) = rule.split_once(" <- ").ok_or_else(|| err("missing ` <- `"))?;
        let body = body
            .split(", ")
            .map(|step| {
                let (dir, rel) = step.split_once(':').ok_or_else(|| err("step lacks `dir:`"))?;
                let direction = match dir {
                    "fwd" => Direction::Forward,
                    "inv" => Direction::Inverse,
                    _ => return Err(err("direction must be fwd or inv")),
                };
                if rel.is_empty() {
                    return Err(err("empty relation"));
                }
                Ok(BodyStep {
                    relation: rel.into(),
                    direction,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if head.is_empty() || body.is_empty() || body.len() > 3 {
            return Err(err("rule needs a head and 1-3 body steps"));
        }
        Ok(CandidateRule {
            head: head.into(),
            body,
            support,
            sample_size,
        })
    }
}

/// `max(5, ceil(0.5% of sample_n))`
pub fn default_gamma(sample_n: usize) -> usize {
    5.max(sample_n.div_ceil(200))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub sample_n: usize,
    pub gamma: usize,
    pub max_hops: u8,
    pub seed: u64,
    /// Out-edges expanded per entity on each hop.
    pub degree_cap: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            sample_n: 10_000,
            gamma: default_gamma(10_000),
            max_hops: 3,
            seed: 0,
            degree_cap: 256,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<(), MineError> {
        let bad = |m: &str| Err(MineError::InvalidConfig(m.to_string()));
        if self.sample_n == 0 {
            return bad("sample_n must be positive");
        }
        if self.gamma == 0 {
            return bad("gamma must be positive");
        }
        if !(2..=3).contains(&self.max_hops) {
            return bad("max_hops must be 2 or 3");
        }
        if self.degree_cap == 0 {
            return bad("degree_cap must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum MineError {
    #[error("unknown relation `{0}`")]
    UnknownRelation(RelationId),
    #[error("invalid mining config: {0}")]
    InvalidConfig(String),
    #[error("mining `{relation}`: {source}")]
    Target {
        relation: RelationId,
        #[source]
        source: Box<MineError>,
    },
    #[error("{path}: {message}")]
    File { path: String, message: String },
}

fn check_target(store: &TripleStore, r: &RelationId, cfg: &MiningConfig) -> Result<u32, MineError> {
    cfg.validate()?;
    store
        .relation(r.as_str())
        .ok_or_else(|| MineError::UnknownRelation(r.clone()))
}

/// Relations `r'` such that sampled `(a, r, b)` instances also have `(b, r', a)`.
pub fn mine_inverse(
    store: &TripleStore,
    r: &RelationId,
    cfg: &MiningConfig,
) -> Result<Vec<CandidateRule>, MineError> {
    check_target(store, r, cfg)?;
    let sample = store.sample_packed(r.as_str(), cfg.sample_n, cfg.seed);
    let mut counts: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut seen = HashSet::new();
    for &[a, _, b] in &sample {
        seen.clear();
        for [_, back, _] in store.out_edges(b).filter(|t| t[2] == a) {
            seen.insert(back);
        }
        for &back in &seen {
            *counts.entry(vec![back]).or_default() += 1;
        }
    }
    Ok(emit(store, r, counts, sample.len(), cfg.gamma, |_| Direction::Inverse))
}

/// Forward 2-hop (and 3-hop when `max_hops == 3`) paths between the endpoints
/// of sampled `(a, r, b)` instances.
pub fn mine_paths(
    store: &TripleStore,
    r: &RelationId,
    cfg: &MiningConfig,
) -> Result<Vec<CandidateRule>, MineError> {
    check_target(store, r, cfg)?;
    let sample = store.sample_packed(r.as_str(), cfg.sample_n, cfg.seed);
    let mut counts: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut into_b: HashMap<u32, Vec<u32>> = HashMap::new();
    for &[a, _, b] in &sample {
        seen.clear();
        into_b.clear();
        for [x, rel, _] in store.in_edges(b) {
            into_b.entry(x).or_default().push(rel);
        }
        for [_, r1, m] in store.out_edges(a).take(cfg.degree_cap) {
            if m == a || m == b {
                continue;
            }
            if let Some(last) = into_b.get(&m) {
                seen.extend(last.iter().map(|&r2| vec![r1, r2]));
            }
            if cfg.max_hops < 3 {
                continue;
            }
            for [_, r2, m2] in store.out_edges(m).take(cfg.degree_cap) {
                if m2 == a || m2 == b || m2 == m {
                    continue;
                }
                if let Some(last) = into_b.get(&m2) {
                    seen.extend(last.iter().map(|&r3| vec![r1, r2, r3]));
                }
            }
        }
        for path in seen.drain() {
            *counts.entry(path).or_default() += 1;
        }
    }
    Ok(emit(store, r, counts, sample.len(), cfg.gamma, |_| Direction::Forward))
}

fn emit(
    store: &TripleStore,
    head: &RelationId,
    counts: HashMap<Vec<u32>, usize>,
    sample_size: usize,
    gamma: usize,
    direction: impl Fn(usize) -> Direction,
) -> Vec<CandidateRule> {
    let mut rules: Vec<CandidateRule> = counts
        .into_iter()
        .filter(|&(_, support)| support >= gamma)
        .map(|(path, support)| CandidateRule {
            head: head.clone(),
            body: path
                .iter()
                .enumerate()
                .map(|(i, &rel)| BodyStep {
                    relation: store.relation_name(rel).clone(),
                    direction: direction(i),
                })
                .collect(),
            support,
            sample_size,
        })
        .collect();
    sort_rules(&mut rules);
    rules
}

/// Descending support; ties broken by body relation ids.
pub fn sort_rules(rules: &mut [CandidateRule]) {
    rules.sort_by(|x, y| {
        y.support.cmp(&x.support).then_with(|| {
            let xs = x.body.iter().map(|s| s.relation.as_str());
            let ys = y.body.iter().map(|s| s.relation.as_str());
            xs.cmp(ys)
        })
    });
}

/// Inverse and path rules for every target, deduplicated on `(head, body)`.
/// Targets are mined in parallel and merged in input order.
pub fn mine_all(
    store: &TripleStore,
    targets: &[RelationId],
    cfg: &MiningConfig,
) -> Result<Vec<CandidateRule>, MineError> {
    cfg.validate()?;
    let per_target: Vec<Vec<CandidateRule>> = targets
        .par_iter()
        .map(|t| {
            let wrap = |source| MineError::Target {
                relation: t.clone(),
                source: Box::new(source),
            };
            let mut rules = mine_inverse(store, t, cfg).map_err(wrap)?;
            rules.extend(mine_paths(store, t, cfg).map_err(wrap)?);
            Ok(rules)
        })
        .collect::<Result<_, MineError>>()?;

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rule in per_target.into_iter().flatten() {
        if seen.insert((rule.head.clone(), rule.body.clone())) {
            out.push(rule);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateFile {
    pub format: String,
    pub config: Option<MiningConfig>,
    pub rules: Vec<CandidateRule>,
}

impl CandidateFile {
    pub fn new(rules: Vec<CandidateRule>, config: Option<MiningConfig>) -> Self {
        Self {
            format: CANDIDATES_FORMAT.to_string(),
            config,
            rules,
        }
    }

    /// One rule per line in the `head <- dir:rel, ... | support/sample` form.
    pub fn to_text(&self) -> String {
        self.rules.iter().map(|r| format!("{r}\n")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("candidate file serializes") + "\n"
    }

    pub fn load(path: &Path) -> Result<Self, MineError> {
        let file_err = |message: String| MineError::File {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            let file: Self = serde_json::from_str(&text).map_err(|e| file_err(e.to_string()))?;
            if file.format != CANDIDATES_FORMAT {
                return Err(file_err(format!("unsupported format `{}`", file.format)));
            }
            return Ok(file);
        }
        let rules = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|(i, l)| l.parse().map_err(|e: RuleTextError| file_err(format!("line {}: {e}", i + 1))))
            .collect::<Result<_, _>>()?;
        Ok(Self::new(rules, None))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn store(rows: &[(&str, &str, &str)]) -> TripleStore {
        TripleStore::from_triples(rows.iter().copied(), &HashMap::new())
    }

    fn cfg(gamma: usize) -> MiningConfig {
        MiningConfig {
            gamma,
            ..MiningConfig::default()
        }
    }

    #[test]
    fn nationality_from_birthplace() {
        let s = store(&[("h", "BornIn", "m"), ("m", "CityOf", "t"), ("h", "Nationality", "t")]);
        let rules = mine_paths(&s, &"Nationality".into(), &cfg(1)).unwrap();
        assert_eq!(
            rules,
            vec![CandidateRule {
                head: "Nationality".into(),
                body: vec![BodyStep::forward("BornIn"), BodyStep::forward("CityOf")],
                support: 1,
                sample_size: 1,
            }]
        );
    }

    #[test]
    fn symmetric_inverse() {
        let s = store(&[("a", "spouse", "b"), ("b", "spouse", "a"), ("c", "spouse", "d"), ("d", "spouse", "c")]);
        let rules = mine_inverse(&s, &"spouse".into(), &cfg(1)).unwrap();
        assert_eq!(rules.len(), 1);
        assert_eq!(rules[0].body, vec![BodyStep::inverse("spouse")]);
        assert_eq!(rules[0].support, 4);
        assert_eq!(rules[0].support, rules[0].sample_size);
    }

    #[test]
    fn nothing_to_mine() {
        let s = store(&[("a", "r", "b"), ("c", "q", "d")]);
        assert!(mine_inverse(&s, &"r".into(), &cfg(1)).unwrap().is_empty());
        assert!(mine_paths(&s, &"r".into(), &cfg(1)).unwrap().is_empty());
    }

    #[test]
    fn unknown_relation_and_bad_config() {
        let s = store(&[("a", "r", "b")]);
        assert!(matches!(
            mine_paths(&s, &"nope".into(), &cfg(1)),
            Err(MineError::UnknownRelation(_))
        ));
        let bad = MiningConfig { max_hops: 4, ..cfg(1) };
        assert!(matches!(mine_paths(&s, &"r".into(), &bad), Err(MineError::InvalidConfig(_))));
        let err = mine_all(&s, &["r".into(), "nope".into()], &cfg(1)).unwrap_err();
        assert!(err.to_string().contains("mining `nope`"));
    }

    #[test]
    fn per_instance_counting() {
        // Two intermediates realize the same path for one instance.
        let s = store(&[
            ("a", "r", "b"),
            ("a", "p", "m1"),
            ("a", "p", "m2"),
            ("m1", "q", "b"),
            ("m2", "q", "b"),
        ]);
        let rules = mine_paths(&s, &"r".into(), &cfg(1)).unwrap();
        assert_eq!(rules.len(), 1);
        assert_eq!(rules[0].support, 1);
    }

    #[test]
    fn three_hop_only_when_enabled() {
        let s = store(&[("a", "r", "b"), ("a", "p", "m1"), ("m1", "q", "m2"), ("m2", "s", "b")]);
        let two = MiningConfig { max_hops: 2, ..cfg(1) };
        assert!(mine_paths(&s, &"r".into(), &two).unwrap().is_empty());
        let three = mine_paths(&s, &"r".into(), &cfg(1)).unwrap();
        assert_eq!(three[0].rule_id(), "r <- fwd:p, fwd:q, fwd:s");
    }

    #[test]
    fn duplicate_targets_dedup() {
        let s = store(&[("h", "BornIn", "m"), ("m", "CityOf", "t"), ("h", "Nationality", "t")]);
        let all = mine_all(&s, &["Nationality".into(), "Nationality".into()], &cfg(1)).unwrap();
        assert_eq!(all.len(), 1);
    }

    #[test]
    fn ties_sorted_by_body() {
        let s = store(&[
            ("a", "r", "b"),
            ("a", "y", "m"),
            ("m", "z", "b"),
            ("a", "x", "n"),
            ("n", "z", "b"),
        ]);
        let rules = mine_paths(&s, &"r".into(), &cfg(1)).unwrap();
        let ids: Vec<_> = rules.iter().map(CandidateRule::rule_id).collect();
        assert_eq!(ids, vec!["r <- fwd:x, fwd:z", "r <- fwd:y, fwd:z"]);
    }

    #[test]
    fn rule_text_round_trip() {
        let r: CandidateRule = "Nationality <- fwd:BornIn, fwd:CityOf | 3/10".parse().unwrap();
        assert_eq!(r.to_string(), "Nationality <- fwd:BornIn, fwd:CityOf | 3/10");
        assert!("x <- | 1/1".parse::<CandidateRule>().is_err());
        assert!("x <- up:y | 1/1".parse::<CandidateRule>().is_err());
    }

    #[test]
    fn default_gamma_floor() {
        assert_eq!(default_gamma(100), 5);
        assert_eq!(default_gamma(10_000), 50);
    }
}
