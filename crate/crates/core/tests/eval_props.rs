mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;

use chainedit::chain::{expand, ExpansionConfig};
use chainedit::dataset::Metric;
use chainedit::eval::{compare_reports, evaluate, evaluate_batches, EvalConfig, MetricReport, SymbolicSubject};
use chainedit::oracle::StoreOracle;
use common::{family_rules, directional_suite, family_meta, store_of, Suite};

fn run(suite: &Suite, cases: &[chainedit::dataset::BenchmarkCase], with_rules: bool) -> MetricReport {
    let meta = family_meta();
    let store = Arc::new(store_of(&suite.rows));
    let oracle = StoreOracle::new(Arc::clone(&store));
    let mut subject = SymbolicSubject::new(store, meta.clone()).with_aliases(suite.aliases.clone());
    let rules = family_rules();
    evaluate(cases, &mut subject, with_rules.then_some(&rules), &oracle, &meta, &EvalConfig::default())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn case_order_does_not_change_scores(perm in Just((0..20usize).collect::<Vec<_>>()).prop_shuffle(), rules in any::<bool>()) {
        let suite = directional_suite(20, 3);
        let shuffled: Vec<_> = perm.iter().map(|&i| suite.cases[i].clone()).collect();
        let a = run(&suite, &suite.cases, rules);
        let b = run(&suite, &shuffled, rules);
        prop_assert_eq!(a.metrics, b.metrics);
    }

    #[test]
    fn accuracy_is_a_recount_of_the_breakdown(n in 1..30usize, residue in 0..5usize, rules in any::<bool>()) {
        let suite = directional_suite(n, residue.min(n));
        let r = run(&suite, &suite.cases, rules);
        let mut tally: BTreeMap<Metric, (usize, usize)> = BTreeMap::new();
        for c in &r.cases {
            for q in &c.queries {
                let t = tally.entry(q.metric).or_default();
                t.0 += q.correct as usize;
                t.1 += 1;
            }
        }
        for (m, s) in &r.metrics {
            prop_assert_eq!((s.correct, s.evaluated), tally[m]);
            prop_assert!((s.accuracy - s.correct as f64 / s.evaluated as f64).abs() < 1e-12);
        }
        prop_assert_eq!(r.evaluated_queries, tally.values().map(|t| t.1).sum::<usize>());
    }
}

#[test]
fn rules_lift_lg_and_leave_specificity_alone() {
    let suite = directional_suite(30, 4);
    let with = run(&suite, &suite.cases, true);
    let without = run(&suite, &suite.cases, false);
    assert_eq!(with.accuracy(Metric::LG), Some(1.0));
    assert_eq!(without.accuracy(Metric::LG), Some(4.0 / 30.0));
    let cmp = compare_reports(&with, &without).unwrap();
    assert_eq!(cmp.delta(Metric::RS), Some(0.0));
    assert_eq!(cmp.delta(Metric::FF), Some(0.0));
    assert!(cmp.delta(Metric::LG).unwrap() > 80.0);
    assert!(cmp.render_table().contains("delta"));
    assert_eq!(with.accuracy(Metric::SA), Some(1.0));
    assert_eq!(MetricReport::from_json(&with.to_json()).unwrap(), with);
}

#[test]
fn prepared_batches_match_inline_expansion() {
    let suite = directional_suite(12, 2);
    let meta = family_meta();
    let store = Arc::new(store_of(&suite.rows));
    let oracle = StoreOracle::new(Arc::clone(&store));
    let batches: Vec<_> = suite
        .cases
        .iter()
        .map(|c| expand(&c.edit, &family_rules(), &oracle, &meta, &ExpansionConfig::default()).unwrap())
        .collect();
    let mut subject = SymbolicSubject::new(store, meta.clone()).with_aliases(suite.aliases.clone());
    let prepared = evaluate_batches(&suite.cases, &mut subject, &batches, &EvalConfig::default());
    let inline = run(&suite, &suite.cases, true);
    assert_eq!(prepared.metrics, inline.metrics);
    assert_eq!(prepared.manifest.batch_source, "batches");

    let mut subject = SymbolicSubject::new(Arc::new(store_of(&suite.rows)), meta);
    let missing = evaluate_batches(&suite.cases, &mut subject, &batches[..6], &EvalConfig::default());
    assert_eq!(missing.errored_cases, 6);
}
