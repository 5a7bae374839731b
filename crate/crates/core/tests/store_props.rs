mod common;

use std::collections::{BTreeSet, HashMap};
use std::io::Cursor;

use proptest::prelude::*;

use chainedit::store::TripleStore;
use common::{store_of, Row};

fn rows(max: usize) -> impl Strategy<Value = Vec<Row>> {
    prop::collection::vec((0..12u8, 0..4u8, 0..12u8), 0..max).prop_map(|v| {
        v.into_iter()
            .map(|(s, r, o)| (format!("e{s}"), format!("r{r}"), format!("e{o}")))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn indexes_match_a_rebuild(rows in rows(300)) {
        prop_assert!(store_of(&rows).indexes_consistent());
    }

    #[test]
    fn lookups_match_linear_scan(rows in rows(300), s in 0..12u8, r in 0..4u8, o in 0..12u8) {
        let store = store_of(&rows);
        let (s, r, o) = (format!("e{s}"), format!("r{r}"), format!("e{o}"));
        let set: BTreeSet<&Row> = rows.iter().collect();
        let want_o: BTreeSet<&str> = set.iter().filter(|t| t.0 == s && t.1 == r).map(|t| t.2.as_str()).collect();
        let got_o: BTreeSet<String> = store.objects_of(&s, &r).iter().map(|e| e.as_str().to_string()).collect();
        prop_assert_eq!(got_o.iter().map(String::as_str).collect::<BTreeSet<_>>(), want_o);
        let want_s: BTreeSet<&str> = set.iter().filter(|t| t.1 == r && t.2 == o).map(|t| t.0.as_str()).collect();
        let got_s: BTreeSet<String> = store.subjects_of(&r, &o).iter().map(|e| e.as_str().to_string()).collect();
        prop_assert_eq!(got_s.iter().map(String::as_str).collect::<BTreeSet<_>>(), want_s);
        prop_assert_eq!(store.len(), set.len());
    }

    #[test]
    fn sampling_is_deterministic(rows in rows(200), n in 1..50usize, seed in any::<u64>()) {
        let store = store_of(&rows);
        let a = store.sample_instances("r0", n, seed);
        let b = store.sample_instances("r0", n, seed);
        let population = rows.iter().filter(|t| t.1 == "r0").collect::<BTreeSet<_>>().len();
        prop_assert_eq!(a.len(), n.min(population));
        prop_assert_eq!(a, b);
    }
}

#[test]
fn ingest_collapses_duplicates_and_keeps_unlabeled_ids() {
    let triples = "# comment\nQ1\tP22\tQ2\nQ1\tP22\tQ2\nQ2\tP26\tQ3\n";
    let labels = "Q1\tAlice\nQ2\tBob\n";
    let store = TripleStore::ingest_reader(Cursor::new(triples), Some(Cursor::new(labels))).unwrap();
    assert_eq!(store.len(), 2);
    assert_eq!(store.label("Q1"), Some("Alice"));
    assert_eq!(store.label("Q3"), Some("Q3"));
    assert!(store.indexes_consistent());
}

#[test]
fn malformed_rows_are_rejected_with_line_numbers() {
    let err = TripleStore::ingest_reader(Cursor::new("a\tb\n"), None::<Cursor<&str>>).unwrap_err();
    assert!(err.to_string().contains("line 1"), "{err}");
    let empty = TripleStore::from_triples(Vec::<(&str, &str, &str)>::new(), &HashMap::new());
    assert!(empty.is_empty());
}
