//! Indexed in-memory triple store.
//!
//! Entities and relations are interned into dense `u32` handles assigned in
//! sorted id order, so every index list is already in id order and lookups
//! return deterministic, sorted results without a post-sort.

mod meta;

pub use meta::{GrammaticalClass, MetaError, MetaTable, RelationMeta};

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

macro_rules! string_id {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl AsRef<str> for $name {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Opaque entity identifier (a QID-like token).
    EntityId
);
string_id!(
    /// Opaque relation identifier.
    RelationId
);

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
}

impl Triple {
    pub fn new(
        subject: impl Into<EntityId>,
        relation: impl Into<RelationId>,
        object: impl Into<EntityId>,
    ) -> Self {
        Self {
            subject: subject.into(),
            relation: relation.into(),
            object: object.into(),
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.relation, self.object)
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file} line {line}: {message}")]
    Malformed {
        file: String,
        line: usize,
        message: String,
    },
    #[error("unknown relation `{0}`")]
    UnknownRelation(RelationId),
}

/// Per-key sizes of the three indexes.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IndexCardinalities {
    pub by_subject: HashMap<String, usize>,
    pub by_object: HashMap<String, usize>,
    pub by_relation: HashMap<String, usize>,
}

/// Interned triple: `[subject, relation, object]`.
pub(crate) type Packed = [u32; 3];

/// The knowledge graph. Immutable once built.
#[derive(Clone, Debug, Default)]
pub struct TripleStore {
    entities: Vec<EntityId>,
    labels: Vec<String>,
    entity_lookup: HashMap<String, u32>,
    relations: Vec<RelationId>,
    relation_lookup: HashMap<String, u32>,
    triples: Vec<Packed>,
    index_s: Vec<Vec<u32>>,
    index_o: Vec<Vec<u32>>,
    index_r: Vec<Vec<u32>>,
    label_lookup: HashMap<String, Vec<u32>>,
}

impl TripleStore {
    /// Reads a tab-separated triple file and an optional `id<TAB>label` file.
    pub fn ingest(triples: &Path, labels: Option<&Path>) -> Result<Self, StoreError> {
        let open = |p: &Path| {
            File::open(p).map(BufReader::new).map_err(|source| StoreError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        let label_map = match labels {
            Some(p) => read_labels(open(p)?, &p.display().to_string())?,
            None => HashMap::new(),
        };
        let rows = read_triples(open(triples)?, &triples.display().to_string())?;
        Ok(Self::build(rows, &label_map))
    }

    pub fn ingest_reader<R: BufRead, L: BufRead>(
        triples: R,
        labels: Option<L>,
    ) -> Result<Self, StoreError> {
        let label_map = match labels {
            Some(r) => read_labels(r, "<labels>")?,
            None => HashMap::new(),
        };
        let rows = read_triples(triples, "<triples>")?;
        Ok(Self::build(rows, &label_map))
    }

    pub fn from_triples<I, S>(triples: I, labels: &HashMap<String, String>) -> Self
    where
        I: IntoIterator<Item = (S, S, S)>,
        S: Into<String>,
    {
        let rows = triples
            .into_iter()
            .map(|(s, r, o)| (s.into(), r.into(), o.into()))
            .collect();
        Self::build(rows, labels)
    }

    fn build(rows: Vec<(String, String, String)>, labels: &HashMap<String, String>) -> Self {
        // First pass interns in arrival order; the second remaps to sorted order.
        let mut ent_tmp: HashMap<String, u32> = HashMap::new();
        let mut rel_tmp: HashMap<String, u32> = HashMap::new();
        let mut packed = Vec::with_capacity(rows.len());
        for (s, r, o) in rows {
            let n = ent_tmp.len() as u32;
            let s = *ent_tmp.entry(s).or_insert(n);
            let n = ent_tmp.len() as u32;
            let o = *ent_tmp.entry(o).or_insert(n);
            let n = rel_tmp.len() as u32;
            let r = *rel_tmp.entry(r).or_insert(n);
            packed.push([s, r, o]);
        }
        let (entities, ent_remap) = sorted_interning::<EntityId>(ent_tmp);
        let (relations, rel_remap) = sorted_interning::<RelationId>(rel_tmp);
        for t in &mut packed {
            *t = [ent_remap[t[0] as usize], rel_remap[t[1] as usize], ent_remap[t[2] as usize]];
        }
        packed.sort_unstable_by(|a, b| {
            (a[0], a[1], a[2]).cmp(&(b[0], b[1], b[2]))
        });
        packed.dedup();

        let entity_labels: Vec<String> = entities
            .iter()
            .map(|e: &EntityId| labels.get(e.as_str()).cloned().unwrap_or_else(|| e.to_string()))
            .collect();
        let mut label_lookup: HashMap<String, Vec<u32>> = HashMap::new();
        for (i, l) in entity_labels.iter().enumerate() {
            label_lookup.entry(l.clone()).or_default().push(i as u32);
        }
        let entity_lookup = entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.to_string(), i as u32))
            .collect();
        let relation_lookup = relations
            .iter()
            .enumerate()
            .map(|(i, r)| (r.to_string(), i as u32))
            .collect();

        let mut store = Self {
            labels: entity_labels,
            entity_lookup,
            relation_lookup,
            triples: packed,
            label_lookup,
            index_s: vec![Vec::new(); entities.len()],
            index_o: vec![Vec::new(); entities.len()],
            index_r: vec![Vec::new(); relations.len()],
            entities,
            relations,
        };
        store.build_indexes();
        store
    }

    fn build_indexes(&mut self) {
        for (i, t) in self.triples.iter().enumerate() {
            self.index_s[t[0] as usize].push(i as u32);
            self.index_r[t[1] as usize].push(i as u32);
            self.index_o[t[2] as usize].push(i as u32);
        }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relations(&self) -> &[RelationId] {
        &self.relations
    }

    pub fn has_relation(&self, r: &str) -> bool {
        self.relation_lookup.contains_key(r)
    }

    pub fn has_entity(&self, e: &str) -> bool {
        self.entity_lookup.contains_key(e)
    }

    /// Display label of an entity; `None` if the id is not in the store.
    pub fn label(&self, e: &str) -> Option<&str> {
        self.entity_lookup
            .get(e)
            .map(|&i| self.labels[i as usize].as_str())
    }

    /// Entities whose label is `label`, plus the entity whose id is `label`.
    /// Sorted by id.
    pub fn entities_labeled(&self, label: &str) -> Vec<EntityId> {
        let mut out: Vec<u32> = self.label_lookup.get(label).cloned().unwrap_or_default();
        if let Some(&i) = self.entity_lookup.get(label) {
            if !out.contains(&i) {
                out.push(i);
            }
        }
        out.sort_unstable();
        out.into_iter().map(|i| self.entities[i as usize].clone()).collect()
    }

    pub fn contains(&self, s: &str, r: &str, o: &str) -> bool {
        match (self.entity(s), self.relation(r), self.entity(o)) {
            (Some(s), Some(r), Some(o)) => self.index_s[s as usize]
                .iter()
                .any(|&i| self.triples[i as usize][1] == r && self.triples[i as usize][2] == o),
            _ => false,
        }
    }

    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.triples.iter().map(|t| self.unpack(*t))
    }

    pub fn triples_with_relation(&self, r: &str) -> Vec<Triple> {
        self.relation(r)
            .map(|r| self.materialize(&self.index_r[r as usize]))
            .unwrap_or_default()
    }

    pub fn triples_with_subject(&self, s: &str) -> Vec<Triple> {
        self.entity(s)
            .map(|s| self.materialize(&self.index_s[s as usize]))
            .unwrap_or_default()
    }

    pub fn triples_with_object(&self, o: &str) -> Vec<Triple> {
        self.entity(o)
            .map(|o| self.materialize(&self.index_o[o as usize]))
            .unwrap_or_default()
    }

    /// Objects `o` with `(s, r, o)` in the store, sorted by id.
    pub fn objects_of(&self, s: &str, r: &str) -> Vec<EntityId> {
        let (Some(s), Some(r)) = (self.entity(s), self.relation(r)) else {
            return Vec::new();
        };
        self.index_s[s as usize]
            .iter()
            .map(|&i| self.triples[i as usize])
            .filter(|t| t[1] == r)
            .map(|t| self.entities[t[2] as usize].clone())
            .collect()
    }

    /// Subjects `s` with `(s, r, o)` in the store, sorted by id.
    pub fn subjects_of(&self, r: &str, o: &str) -> Vec<EntityId> {
        let (Some(r), Some(o)) = (self.relation(r), self.entity(o)) else {
            return Vec::new();
        };
        let mut out: Vec<u32> = self.index_o[o as usize]
            .iter()
            .map(|&i| self.triples[i as usize])
            .filter(|t| t[1] == r)
            .map(|t| t[0])
            .collect();
        out.dedup();
        out.into_iter().map(|i| self.entities[i as usize].clone()).collect()
    }

    /// Uniform sample of `min(n, population)` distinct triples with relation
    /// `r`, reproducible per seed and returned in store order.
    pub fn sample_instances(&self, r: &str, n: usize, seed: u64) -> Vec<Triple> {
        self.sample_packed(r, n, seed)
            .into_iter()
            .map(|t| self.unpack(t))
            .collect()
    }

    pub(crate) fn sample_packed(&self, r: &str, n: usize, seed: u64) -> Vec<Packed> {
        let Some(r) = self.relation(r) else {
            return Vec::new();
        };
        let population = &self.index_r[r as usize];
        let amount = n.min(population.len());
        let mut picked: Vec<u32> = if amount == population.len() {
            population.clone()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            index::sample(&mut rng, population.len(), amount)
                .into_iter()
                .map(|i| population[i])
                .collect()
        };
        picked.sort_unstable();
        picked.into_iter().map(|i| self.triples[i as usize]).collect()
    }

    /// Rebuilds every index from the triple list and compares with the live ones.
    pub fn indexes_consistent(&self) -> bool {
        let mut fresh = Self {
            index_s: vec![Vec::new(); self.entities.len()],
            index_o: vec![Vec::new(); self.entities.len()],
            index_r: vec![Vec::new(); self.relations.len()],
            triples: self.triples.clone(),
            ..Default::default()
        };
        fresh.build_indexes();
        let no_dupes = self.triples.windows(2).all(|w| w[0] != w[1]);
        no_dupes
            && fresh.index_s == self.index_s
            && fresh.index_o == self.index_o
            && fresh.index_r == self.index_r
    }

    pub fn index_cardinalities(&self) -> IndexCardinalities {
        let count = |index: &[Vec<u32>], names: &dyn Fn(usize) -> String| {
            index
                .iter()
                .enumerate()
                .filter(|(_, v)| !v.is_empty())
                .map(|(i, v)| (names(i), v.len()))
                .collect()
        };
        IndexCardinalities {
            by_subject: count(&self.index_s, &|i| self.entities[i].to_string()),
            by_object: count(&self.index_o, &|i| self.entities[i].to_string()),
            by_relation: count(&self.index_r, &|i| self.relations[i].to_string()),
        }
    }

    // --- interned access for the miner ---

    pub(crate) fn entity(&self, e: &str) -> Option<u32> {
        self.entity_lookup.get(e).copied()
    }

    pub(crate) fn relation(&self, r: &str) -> Option<u32> {
        self.relation_lookup.get(r).copied()
    }

    pub(crate) fn relation_name(&self, r: u32) -> &RelationId {
        &self.relations[r as usize]
    }

    pub(crate) fn out_edges(&self, e: u32) -> impl Iterator<Item = Packed> + '_ {
        self.index_s[e as usize].iter().map(|&i| self.triples[i as usize])
    }

    pub(crate) fn in_edges(&self, e: u32) -> impl Iterator<Item = Packed> + '_ {
        self.index_o[e as usize].iter().map(|&i| self.triples[i as usize])
    }

    fn unpack(&self, t: Packed) -> Triple {
        Triple {
            subject: self.entities[t[0] as usize].clone(),
            relation: self.relations[t[1] as usize].clone(),
            object: self.entities[t[2] as usize].clone(),
        }
    }

    fn materialize(&self, idx: &[u32]) -> Vec<Triple> {
        idx.iter().map(|&i| self.unpack(self.triples[i as usize])).collect()
    }
}

fn sorted_interning<T: From<String> + Ord + Clone>(tmp: HashMap<String, u32>) -> (Vec<T>, Vec<u32>) {
    let mut named: Vec<(String, u32)> = tmp.into_iter().collect();
    named.sort_unstable();
    let mut remap = vec![0u32; named.len()];
    let mut out = Vec::with_capacity(named.len());
    for (new, (name, old)) in named.into_iter().enumerate() {
        remap[old as usize] = new as u32;
        out.push(T::from(name));
    }
    (out, remap)
}

fn data_lines<'a, R: BufRead + 'a>(
    reader: R,
    file: &'a str,
) -> impl Iterator<Item = Result<(usize, String), StoreError>> + 'a {
    reader
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| match line {
            Err(source) => Some(Err(StoreError::Io {
                path: file.to_string(),
                source,
            })),
            Ok(l) => {
                let l = l.trim_end_matches('\r');
                if l.trim().is_empty() || l.starts_with('#') {
                    None
                } else {
                    Some(Ok((i + 1, l.to_string())))
                }
            }
        })
}

fn read_triples<R: BufRead>(reader: R, file: &str) -> Result<Vec<(String, String, String)>, StoreError> {
    let mut rows = Vec::new();
    for item in data_lines(reader, file) {
        let (line, text) = item?;
        let cols: Vec<&str> = text.split('\t').collect();
        if cols.len() != 3 || cols.iter().any(|c| c.trim().is_empty()) {
            return Err(StoreError::Malformed {
                file: file.to_string(),
                line,
                message: format!("expected 3 non-empty tab-separated columns, found {}", cols.len()),
            });
        }
        rows.push((
            cols[0].trim().to_string(),
            cols[1].trim().to_string(),
            cols[2].trim().to_string(),
        ));
    }
    Ok(rows)
}

fn read_labels<R: BufRead>(reader: R, file: &str) -> Result<HashMap<String, String>, StoreError> {
    let mut labels = HashMap::new();
    for item in data_lines(reader, file) {
        let (line, text) = item?;
        match text.split_once('\t') {
            Some((id, label)) if !id.trim().is_empty() && !label.trim().is_empty() => {
                labels.insert(id.trim().to_string(), label.trim().to_string());
            }
            _ => {
                return Err(StoreError::Malformed {
                    file: file.to_string(),
                    line,
                    message: "expected `id<TAB>label`".to_string(),
                })
            }
        }
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family() -> TripleStore {
        TripleStore::ingest_reader(
            "alice\tfather\tbob\nbob\tspouse\trose\n".as_bytes(),
            None::<&[u8]>,
        )
        .unwrap()
    }

    #[test]
    fn two_row_file() {
        let store = family();
        assert_eq!(store.len(), 2);
        assert_eq!(store.triples_with_relation("father").len(), 1);
        assert_eq!(store.objects_of("alice", "father"), vec![EntityId::from("bob")]);
        assert!(store.objects_of("alice", "mother").is_empty());
        assert_eq!(store.subjects_of("father", "bob"), vec![EntityId::from("alice")]);
        assert!(store.subjects_of("spouse", "missing_entity").is_empty());
    }

    #[test]
    fn duplicate_rows_collapse() {
        let store = TripleStore::ingest_reader(
            "a\tr\tb\na\tr\tb\n".as_bytes(),
            None::<&[u8]>,
        )
        .unwrap();
        assert_eq!(store.len(), 1);
        assert!(store.indexes_consistent());
    }

    #[test]
    fn comments_blank_lines_and_empty_file() {
        let store = TripleStore::ingest_reader(
            "# header\n\na\tr\tb\n".as_bytes(),
            None::<&[u8]>,
        )
        .unwrap();
        assert_eq!(store.len(), 1);
        let empty = TripleStore::ingest_reader("".as_bytes(), None::<&[u8]>).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn malformed_row_names_line() {
        let err = TripleStore::ingest_reader(
            "a\tr\tb\n# c\na\tr\n".as_bytes(),
            None::<&[u8]>,
        )
        .unwrap_err();
        match err {
            StoreError::Malformed { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn labels_and_missing_labels() {
        let store = TripleStore::ingest_reader(
            "Q1\tP22\tQ2\n".as_bytes(),
            Some("Q1\tAlice\n".as_bytes()),
        )
        .unwrap();
        assert_eq!(store.label("Q1"), Some("Alice"));
        assert_eq!(store.label("Q2"), Some("Q2"));
        assert_eq!(store.entities_labeled("Alice"), vec![EntityId::from("Q1")]);
        assert_eq!(store.entities_labeled("Q2"), vec![EntityId::from("Q2")]);
    }

    #[test]
    fn sampling_edges() {
        let rows: Vec<_> = (0..5).map(|i| (format!("e{i}"), "r".to_string(), "x".to_string())).collect();
        let store = TripleStore::from_triples(rows, &HashMap::new());
        assert!(store.sample_instances("r", 0, 1).is_empty());
        assert_eq!(store.sample_instances("r", 10, 1).len(), 5);
        let a = store.sample_instances("r", 3, 42);
        assert_eq!(a, store.sample_instances("r", 3, 42));
        assert_eq!(a.len(), 3);
        assert!(store.sample_instances("nope", 3, 42).is_empty());
    }
}
