#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use chainedit::dataset::{parse_cases, BenchmarkCase};
use chainedit::dsl::{DirectiveRule, PathExpr, Provenance, Root, RuleSet, XBinding, Anchor};
use chainedit::miner::{BodyStep, CandidateRule, Direction};
use chainedit::store::{MetaTable, RelationMeta, TripleStore};

pub type Row = (String, String, String);

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn store_of(rows: &[Row]) -> TripleStore {
    TripleStore::from_triples(
        rows.iter().map(|(s, r, o)| (s.as_str(), r.as_str(), o.as_str())),
        &HashMap::new(),
    )
}

pub fn row(s: &str, r: &str, o: &str) -> Row {
    (s.to_string(), r.to_string(), o.to_string())
}

pub type RuleKey = (String, Vec<(String, Direction)>);

pub fn rule_map(rules: &[CandidateRule]) -> BTreeMap<RuleKey, usize> {
    rules
        .iter()
        .map(|r| {
            let body = r.body.iter().map(|s| (s.relation.to_string(), s.direction)).collect();
            ((r.head.to_string(), body), r.support)
        })
        .collect()
}

/// Exhaustive reference miner over all instances of `target`.
///
/// Inverse rules: `(a, target, b)` supports `r'` when `(b, r', a)` exists.
/// Path rules: every simple walk `a -> m1 (-> m2) -> b` of forward edges whose
/// intermediates avoid both endpoints and each other. Support counts
/// instances, not walks.
pub fn brute_force(rows: &[Row], target: &str, max_hops: usize, gamma: usize) -> BTreeMap<RuleKey, usize> {
    let facts: BTreeSet<&Row> = rows.iter().collect();
    let mut counts: BTreeMap<RuleKey, usize> = BTreeMap::new();
    for (a, _, b) in facts.iter().filter(|(_, r, _)| r == target) {
        let mut found: BTreeSet<RuleKey> = BTreeSet::new();
        for (s, r, o) in &facts {
            if s == b && o == a {
                found.insert((target.to_string(), vec![(r.clone(), Direction::Inverse)]));
            }
        }
        for (s1, r1, m1) in &facts {
            if s1 != a || m1 == a || m1 == b {
                continue;
            }
            for (s2, r2, o2) in &facts {
                if s2 != m1 {
                    continue;
                }
                if o2 == b {
                    found.insert((
                        target.to_string(),
                        vec![(r1.clone(), Direction::Forward), (r2.clone(), Direction::Forward)],
                    ));
                }
                if max_hops < 3 || o2 == a || o2 == b || o2 == m1 {
                    continue;
                }
                for (s3, r3, o3) in &facts {
                    if s3 == o2 && o3 == b {
                        found.insert((
                            target.to_string(),
                            vec![
                                (r1.clone(), Direction::Forward),
                                (r2.clone(), Direction::Forward),
                                (r3.clone(), Direction::Forward),
                            ],
                        ));
                    }
                }
            }
        }
        for k in found {
            *counts.entry(k).or_default() += 1;
        }
    }
    counts.retain(|_, c| *c >= gamma);
    counts
}

/// Small random graph: a handful of entities and relations so that paths,
/// cycles, self loops and parallel edges all occur.
pub fn random_rows(seed: u64) -> Vec<Row> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entities = rng.random_range(3..=14);
    let relations = rng.random_range(1..=5);
    let n = rng.random_range(1..=200);
    let mut set = BTreeSet::new();
    for _ in 0..n {
        set.insert(row(
            &format!("e{}", rng.random_range(0..entities)),
            &format!("r{}", rng.random_range(0..relations)),
            &format!("e{}", rng.random_range(0..entities)),
        ));
    }
    set.into_iter().collect()
}

/// Random path expression over a small relation alphabet.
pub fn random_path(rng: &mut ChaCha8Rng) -> PathExpr {
    let roots = [Root::S, Root::O, Root::X];
    let alphabet = ["father", "mother", "spouse", "birthplace", "country", "p17", "sub_of", "a-b", "wd:P31", "r9"];
    let root = *roots.choose(rng).unwrap();
    let len = rng.random_range(0..=4);
    let mut steps = Vec::new();
    for i in 0..len {
        let rel = *alphabet.choose(rng).unwrap();
        if i == 0 && rng.random_bool(0.3) {
            steps.push(BodyStep::inverse(rel));
        } else {
            steps.push(BodyStep::forward(rel));
        }
    }
    PathExpr::new(root, steps).unwrap()
}

pub fn family_meta() -> MetaTable {
    MetaTable::from_entries([
        RelationMeta::nominal("father", "father"),
        RelationMeta::nominal("mother", "mother"),
        RelationMeta::nominal("spouse", "spouse").symmetric(true),
        RelationMeta::nominal("birthplace", "birthplace"),
        RelationMeta::nominal("employer", "employer"),
    ])
    .unwrap()
}

pub fn family_rules() -> RuleSet {
    RuleSet::load(&fixture("family_rules.json")).unwrap()
}

fn q(prompt: String, answer: &str, chain: Value) -> Value {
    json!({ "test_queries": [{ "prompt": prompt, "answers": [{"value": answer, "aliases": []}], "chain": chain }] })
}

fn fact(s: &str, r: &str, o: &str) -> Value {
    json!({ "subject": s, "relation": r, "object": o })
}

/// Benchmark with chain disagreements planted in every fourth case.
pub struct VariantBench {
    pub cases: Vec<BenchmarkCase>,
    pub oracle_rows: Vec<Row>,
    /// (case id, prompt) of each LG query the oracle disagrees with.
    pub disagreeing: BTreeSet<(String, String)>,
    /// (case id, prompt) -> oracle's terminal answer.
    pub terminal: BTreeMap<(String, String), String>,
}

pub fn variant_bench(n: usize) -> VariantBench {
    let meta = family_meta();
    let p = |r: &str, s: &str| meta.get(&r.into()).unwrap().prompt(s);
    let mut cases = Vec::new();
    let mut oracle_rows = Vec::new();
    let mut disagreeing = BTreeSet::new();
    let mut terminal = BTreeMap::new();
    for i in 0..n {
        let (person, new_father, wife) = (format!("Person{i}"), format!("NewFather{i}"), format!("Wife{i}"));
        let id = format!("v{i:02}");
        let planted = i % 4 == 0;
        let believed = if planted { format!("Other{i}") } else { wife.clone() };
        oracle_rows.push(row(&new_father, "spouse", &believed));
        oracle_rows.push(row(&believed, "birthplace", &format!("Town{i}")));
        oracle_rows.push(row(&wife, "birthplace", &format!("Town{i}")));
        let lg_prompt = p("mother", &person);
        let re_prompt = format!("The birthplace of the mother of {person} is");
        if planted {
            disagreeing.insert((id.clone(), lg_prompt.clone()));
            disagreeing.insert((id.clone(), re_prompt.clone()));
        }
        terminal.insert((id.clone(), lg_prompt.clone()), believed.clone());
        terminal.insert((id.clone(), re_prompt.clone()), format!("Town{i}"));
        cases.push(json!({
            "case_id": id,
            "edit": { "subject": person, "relation": "father", "target": new_father,
                      "prompt": format!("{} {new_father}.", p("father", &person)) },
            "Logical_Generalization": [q(lg_prompt, &wife, json!([fact(&new_father, "spouse", &wife)]))],
            "Compositionality_I": [q(re_prompt, &format!("Town{i}"), json!([
                fact(&new_father, "spouse", &wife), fact(&wife, "birthplace", &format!("Town{i}"))
            ]))],
            "Relation_Specificity": [q(p("birthplace", &person), &format!("City{i}"), json!([]))],
        }));
    }
    VariantBench {
        cases: parse_cases(&Value::Array(cases).to_string()).unwrap(),
        oracle_rows,
        disagreeing,
        terminal,
    }
}

/// End-to-end suite: every LG gold follows from the new father's spouse.
/// In the first `residue` cases that spouse is already the old mother.
pub struct Suite {
    pub cases: Vec<BenchmarkCase>,
    pub rows: Vec<Row>,
    pub aliases: Vec<(String, String)>,
}

pub fn directional_suite(n: usize, residue: usize) -> Suite {
    let meta = family_meta();
    let p = |r: &str, s: &str| meta.get(&r.into()).unwrap().prompt(s);
    let mut cases = Vec::new();
    let mut rows = Vec::new();
    let mut aliases = Vec::new();
    for i in 0..n {
        let person = format!("Person{i}");
        let (father, mother) = (format!("Father{i}"), format!("Mother{i}"));
        let new_father = format!("NewFather{i}");
        let wife = if i < residue { mother.clone() } else { format!("Wife{i}") };
        let city = format!("City{}", i % 7);
        rows.extend([
            row(&person, "father", &father),
            row(&person, "mother", &mother),
            row(&person, "birthplace", &city),
            row(&father, "spouse", &mother),
            row(&new_father, "spouse", &wife),
            row(&father, "employer", &format!("Firm{}", i % 5)),
        ]);
        let alias = format!("P{i} Jr");
        aliases.push((alias.clone(), person.clone()));
        cases.push(json!({
            "case_id": format!("s{i:02}"),
            "edit": { "subject": person, "relation": "father", "target": new_father,
                      "prompt": format!("{} {new_father}.", p("father", &person)) },
            "Logical_Generalization": [q(p("mother", &person), &wife, json!([fact(&new_father, "spouse", &wife)]))],
            "Subject_Aliasing": [q(p("father", &alias), &new_father, json!([]))],
            "Relation_Specificity": [q(p("birthplace", &person), &city, json!([]))],
            "Forgetfulness": [q(p("employer", &father), &format!("Firm{}", i % 5), json!([]))],
        }));
    }
    Suite {
        cases: parse_cases(&Value::Array(cases).to_string()).unwrap(),
        rows,
        aliases,
    }
}

/// Random functional KB plus a random ruleset whose triggers and heads share
/// one relation alphabet, so rules feed each other in cycles.
pub fn random_cyclic(seed: u64) -> (Vec<Row>, RuleSet, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rels = ["a", "b", "c", "d"];
    let entities = rng.random_range(3..=8);
    let mut rows = Vec::new();
    for e in 0..entities {
        for r in rels {
            if rng.random_bool(0.7) {
                rows.push(row(&format!("e{e}"), r, &format!("e{}", rng.random_range(0..entities))));
            }
        }
    }
    let count = rng.random_range(2..=8);
    let mut directives = Vec::new();
    let mut guard = 0;
    while directives.len() < count && guard < 1000 {
        guard += 1;
        let phi = *rels.choose(&mut rng).unwrap();
        let head = *rels.choose(&mut rng).unwrap();
        let slot = |rng: &mut ChaCha8Rng| {
            let root = if rng.random_bool(0.5) { Root::S } else { Root::O };
            let hops = rng.random_range(0..=2);
            let steps = (0..hops).map(|_| BodyStep::forward(*rels.choose(rng).unwrap())).collect();
            PathExpr::new(root, steps).unwrap()
        };
        let (mut subj, obj) = (slot(&mut rng), slot(&mut rng));
        let mut binding = None;
        if rng.random_bool(0.2) {
            subj = PathExpr::bare(Root::X);
            binding = Some(XBinding {
                relation: (*rels.choose(&mut rng).unwrap()).into(),
                anchor: if rng.random_bool(0.5) { Anchor::S } else { Anchor::O },
            });
        }
        if let Ok(d) = DirectiveRule::new(
            format!("d{}", directives.len()),
            phi,
            (subj, head, obj),
            binding,
            Provenance::Manual { note: None },
        ) {
            directives.push(d);
        }
    }
    let depth = rng.random_range(1..=4);
    (rows, RuleSet::new(directives).unwrap(), depth)
}

pub fn letters_meta() -> MetaTable {
    MetaTable::from_entries(["a", "b", "c", "d"].map(|r| RelationMeta::nominal(r, r))).unwrap()
}

/// Chat-completion endpoint answering from `reply(last user message)`.
/// The first `fail_first` requests get HTTP 503. Stops when dropped.
pub struct StubChat {
    server: std::sync::Arc<tiny_http::Server>,
    pub port: u16,
    pub requests: std::sync::Arc<std::sync::Mutex<Vec<(Option<String>, String)>>>,
    worker: Option<std::thread::JoinHandle<()>>,
}

impl StubChat {
    pub fn start(reply: fn(&str) -> String, fail_first: usize) -> Self {
        use std::sync::{Arc, Mutex};
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let port = server.server_addr().to_ip().unwrap().port();
        let requests: Arc<Mutex<Vec<(Option<String>, String)>>> = Arc::default();
        let worker = {
            let (server, requests) = (Arc::clone(&server), Arc::clone(&requests));
            std::thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    let mut body = String::new();
                    req.as_reader().read_to_string(&mut body).unwrap();
                    let auth = req
                        .headers()
                        .iter()
                        .find(|h| h.field.equiv("Authorization"))
                        .map(|h| h.value.to_string());
                    let n = {
                        let mut r = requests.lock().unwrap();
                        r.push((auth, body.clone()));
                        r.len()
                    };
                    if n <= fail_first {
                        let _ = req.respond(tiny_http::Response::from_string("busy").with_status_code(503));
                        continue;
                    }
                    let v: Value = serde_json::from_str(&body).unwrap();
                    let last = v["messages"].as_array().unwrap().last().unwrap()["content"].as_str().unwrap().to_string();
                    let out = json!({"choices": [{"message": {"role": "assistant", "content": reply(&last)}}]});
                    let _ = req.respond(tiny_http::Response::from_string(out.to_string()));
                }
            })
        };
        Self { server, port, requests, worker: Some(worker) }
    }

    pub fn endpoint(&self) -> String {
        format!("http://127.0.0.1:{}/v1/chat/completions", self.port)
    }
}

impl Drop for StubChat {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

/// Canned answers for the family example.
pub fn family_reply(prompt: &str) -> String {
    match prompt {
        "The spouse of Carol is" => "Mary.".to_string(),
        "The mother of Alice is" => "Rose".to_string(),
        p if p.starts_with("If the father of A is B") => "A father's wife is the mother. Answer: True".to_string(),
        _ => "I don't know.".to_string(),
    }
}
