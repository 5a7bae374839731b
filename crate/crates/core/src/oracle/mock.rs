use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::{parse_judgment, ConfidenceLabel, Judgment, KnowledgeOracle, KnowledgeQuery, OracleAnswer, OracleError};
use crate::store::{EntityId, RelationId, RelationMeta, TripleStore};

/// Fixed rule-text to label mapping used by the mock judge.
#[derive(Clone, Debug, Default)]
pub struct JudgeTable {
    labels: HashMap<String, ConfidenceLabel>,
}

fn table_key(text: &str) -> String {
    text.trim().trim_end_matches('.').trim().to_lowercase()
}

impl JudgeTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, rule_text: &str, label: ConfidenceLabel) {
        self.labels.insert(table_key(rule_text), label);
    }

    pub fn lookup(&self, rule_text: &str) -> Option<ConfidenceLabel> {
        self.labels.get(&table_key(rule_text)).copied()
    }

    /// `label<TAB>rule text` per line.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut table = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (label, rule) = line
                .split_once('\t')
                .ok_or_else(|| format!("line {}: expected `label<TAB>rule`", i + 1))?;
            let label = label.parse().map_err(|e| format!("line {}: {e}", i + 1))?;
            table.insert(rule, label);
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, OracleError> {
        let file_err = |message: String| OracleError::File {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        Self::parse(&text).map_err(file_err)
    }
}

/// Deterministic oracle backed by a triple store.
///
/// Subjects are matched by label (or id). A query is answered only when it
/// has exactly one answer; zero or several answers give `Unknown`.
#[derive(Clone, Debug)]
pub struct StoreOracle {
    store: Arc<TripleStore>,
    judge: JudgeTable,
}

impl StoreOracle {
    pub fn new(store: Arc<TripleStore>) -> Self {
        Self {
            store,
            judge: JudgeTable::new(),
        }
    }

    pub fn with_judge(mut self, judge: JudgeTable) -> Self {
        self.judge = judge;
        self
    }

    pub fn store(&self) -> &TripleStore {
        &self.store
    }

    fn unique(&self, found: BTreeSet<EntityId>) -> OracleAnswer {
        if found.len() != 1 {
            return OracleAnswer::unknown("");
        }
        let id = found.into_iter().next().expect("one element");
        let label = self.store.label(id.as_str()).unwrap_or(id.as_str()).to_string();
        OracleAnswer::answered(label.clone(), label)
    }
}

impl KnowledgeOracle for StoreOracle {
    fn answer_query(&self, q: &KnowledgeQuery, _meta: &RelationMeta) -> Result<OracleAnswer, OracleError> {
        if q.subject.trim().is_empty() {
            return Err(OracleError::InvalidQuery("empty subject".to_string()));
        }
        let found = self
            .store
            .entities_labeled(&q.subject)
            .iter()
            .flat_map(|s| self.store.objects_of(s.as_str(), q.relation.as_str()))
            .collect();
        Ok(self.unique(found))
    }

    fn answer_inverse_query(
        &self,
        relation: &RelationId,
        object: &str,
        _meta: &RelationMeta,
    ) -> Result<OracleAnswer, OracleError> {
        if object.trim().is_empty() {
            return Err(OracleError::InvalidQuery("empty object".to_string()));
        }
        let found = self
            .store
            .entities_labeled(object)
            .iter()
            .flat_map(|o| self.store.subjects_of(relation.as_str(), o.as_str()))
            .collect();
        Ok(self.unique(found))
    }

    fn judge_rule(&self, nl_rule: &str) -> Result<Judgment, OracleError> {
        if nl_rule.trim().is_empty() {
            return Err(OracleError::InvalidQuery("empty rule text".to_string()));
        }
        let response = match self.judge.lookup(nl_rule) {
            Some(label) => format!("Judged from the label table. Answer: {label}"),
            None => "No entry in the label table.".to_string(),
        };
        Ok(parse_judgment(&response))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::AnswerStatus;

    fn oracle(rows: &[(&str, &str, &str)]) -> StoreOracle {
        StoreOracle::new(Arc::new(TripleStore::from_triples(rows.iter().copied(), &HashMap::new())))
    }

    #[test]
    fn forward_answers() {
        let o = oracle(&[("Carol", "spouse", "Mary")]);
        let meta = RelationMeta::nominal("spouse", "spouse");
        let a = o.answer_query(&KnowledgeQuery::new("Carol", "spouse"), &meta).unwrap();
        assert_eq!(a.entity.as_deref(), Some("Mary"));
        let none = o.answer_query(&KnowledgeQuery::new("Mary", "spouse"), &meta).unwrap();
        assert_eq!(none.status, AnswerStatus::Unknown);
        assert!(o.answer_query(&KnowledgeQuery::new(" ", "spouse"), &meta).is_err());
    }

    #[test]
    fn inverse_answers_need_a_unique_preimage() {
        let meta = RelationMeta::nominal("father", "father");
        let one = oracle(&[("alice", "father", "bob")]);
        let a = one.answer_inverse_query(&"father".into(), "bob", &meta).unwrap();
        assert_eq!(a.entity.as_deref(), Some("alice"));
        let two = oracle(&[("alice", "father", "bob"), ("carl", "father", "bob")]);
        let b = two.answer_inverse_query(&"father".into(), "bob", &meta).unwrap();
        assert_eq!(b.status, AnswerStatus::Unknown);
    }

    #[test]
    fn labels_are_answers() {
        let store = TripleStore::from_triples(
            [("Q1", "P26", "Q2")],
            &HashMap::from([("Q1".to_string(), "Carol".to_string()), ("Q2".to_string(), "Mary".to_string())]),
        );
        let o = StoreOracle::new(Arc::new(store));
        let a = o
            .answer_query(&KnowledgeQuery::new("Carol", "P26"), &RelationMeta::nominal("P26", "spouse"))
            .unwrap();
        assert_eq!(a.entity.as_deref(), Some("Mary"));
    }

    #[test]
    fn judge_table() {
        let mut table = JudgeTable::new();
        table.insert(
            "When the father of X is Y, then the sibling of X is the child of Y.",
            ConfidenceLabel::True,
        );
        let o = oracle(&[]).with_judge(table);
        let j = o
            .judge_rule("When the father of X is Y, then the sibling of X is the child of Y.")
            .unwrap();
        assert_eq!(j.label, ConfidenceLabel::True);
        assert_eq!(o.judge_rule("something else").unwrap().label, ConfidenceLabel::Uncertain);
        assert!(JudgeTable::parse("Usually True\tWhen the country of X is Y, then ...").is_ok());
        assert!(JudgeTable::parse("Maybe\tx").is_err());
    }
}
