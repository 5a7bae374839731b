use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::chain::EditBatch;
use crate::store::{MetaTable, RelationId, RelationMeta, TripleStore};

#[derive(Debug, Error)]
pub enum SubjectError {
    #[error("subject transport failed: {0}")]
    Transport(String),
    #[error("subject returned HTTP {status}: {message}")]
    Status { status: u16, message: String },
    #[error("subject protocol error: {0}")]
    Protocol(String),
    #[error("{0}")]
    Model(String),
}

/// The system under edit. Calls are strictly sequential.
pub trait SubjectModel {
    fn apply_batch(&mut self, batch: &EditBatch) -> Result<(), SubjectError>;
    fn query(&mut self, prompt: &str) -> Result<String, SubjectError>;
    /// Returns to the state before the last `apply_batch`.
    fn revert(&mut self) -> Result<(), SubjectError>;
}

impl<T: SubjectModel + ?Sized> SubjectModel for Box<T> {
    fn apply_batch(&mut self, batch: &EditBatch) -> Result<(), SubjectError> {
        (**self).apply_batch(batch)
    }
    fn query(&mut self, prompt: &str) -> Result<String, SubjectError> {
        (**self).query(prompt)
    }
    fn revert(&mut self) -> Result<(), SubjectError> {
        (**self).revert()
    }
}

const IN_PROMPT_MARKER: &str = "Complete the following sentence: ";
const MAX_NESTING: usize = 8;

/// Deterministic subject: a triple store plus an overlay of applied edits.
///
/// Prompts are read back through the relation templates, so "The mother of
/// Alice is" asks for `(Alice, mother, ?)` and nested noun phrases such as
/// "The country of the birthplace of Alice is" are followed hop by hop.
/// Context stated before "Complete the following sentence:" is ignored.
#[derive(Clone, Debug)]
pub struct SymbolicSubject {
    base: Arc<TripleStore>,
    meta: MetaTable,
    aliases: HashMap<String, String>,
    overlay: HashMap<(String, RelationId), String>,
}

impl SymbolicSubject {
    pub fn new(base: Arc<TripleStore>, meta: MetaTable) -> Self {
        Self {
            base,
            meta,
            aliases: HashMap::new(),
            overlay: HashMap::new(),
        }
    }

    /// Alternative names; each alias stands for its canonical label.
    pub fn with_aliases(mut self, aliases: impl IntoIterator<Item = (String, String)>) -> Self {
        self.aliases
            .extend(aliases.into_iter().map(|(alias, canonical)| (alias.to_lowercase(), canonical)));
        self
    }

    pub fn overlay_len(&self) -> usize {
        self.overlay.len()
    }

    fn relations(&self) -> Vec<RelationMeta> {
        let mut ids: Vec<RelationId> = self.base.relations().to_vec();
        ids.extend(self.meta.iter().map(|m| m.relation.clone()));
        ids.extend(self.overlay.keys().map(|(_, r)| r.clone()));
        ids.sort();
        ids.dedup();
        ids.iter().filter_map(|r| self.meta.get(r).ok().map(|m| m.into_owned())).collect()
    }

    fn canonical(&self, name: &str) -> String {
        self.aliases
            .get(&name.to_lowercase())
            .cloned()
            .unwrap_or_else(|| name.to_string())
    }

    /// Current object of `(subject, relation)`: the overlay first, then the
    /// smallest base object.
    pub fn lookup(&self, subject: &str, relation: &RelationId) -> Option<String> {
        let subject = self.canonical(subject);
        if let Some(o) = self.overlay.get(&(subject.clone(), relation.clone())) {
            return Some(o.clone());
        }
        let mut objects: Vec<String> = self
            .base
            .entities_labeled(&subject)
            .iter()
            .flat_map(|s| self.base.objects_of(s.as_str(), relation.as_str()))
            .map(|o| self.base.label(o.as_str()).unwrap_or(o.as_str()).to_string())
            .collect();
        objects.sort();
        objects.into_iter().next()
    }

    fn entity(&self, text: &str, rels: &[RelationMeta], depth: usize) -> Option<String> {
        let text = text.trim();
        if depth < MAX_NESTING {
            for m in rels {
                let phrase = m.object_phrase("\u{0}");
                let (pre, post) = phrase.split_once('\u{0}').expect("placeholder present");
                if let Some(inner) = strip_affixes(text, pre, post) {
                    if let Some(of) = self.entity(inner, rels, depth + 1) {
                        if let Some(v) = self.lookup(&of, &m.relation) {
                            return Some(v);
                        }
                    }
                }
            }
        }
        Some(self.canonical(text)).filter(|t| !t.is_empty())
    }

    /// Answer to a completion prompt, or `None` when nothing matches.
    pub fn answer(&self, prompt: &str) -> Option<String> {
        let text = match prompt.rfind(IN_PROMPT_MARKER) {
            Some(i) => &prompt[i + IN_PROMPT_MARKER.len()..],
            None => prompt,
        };
        let text = text.trim().trim_end_matches(['.', '?']).trim_end();
        let rels = self.relations();
        for m in &rels {
            let (pre, post) = m.prompt_parts();
            let Some(subject) = strip_affixes(text, &pre, &post) else {
                continue;
            };
            if let Some(s) = self.entity(subject, &rels, 0) {
                if let Some(v) = self.lookup(&s, &m.relation) {
                    return Some(v);
                }
            }
        }
        None
    }
}

/// The middle of `text` when it starts with `pre` and ends with `post`,
/// ignoring ASCII case.
fn strip_affixes<'a>(text: &'a str, pre: &str, post: &str) -> Option<&'a str> {
    let lower = text.to_ascii_lowercase();
    let (pre_l, post_l) = (pre.to_ascii_lowercase(), post.to_ascii_lowercase());
    if text.len() < pre.len() + post.len() || !lower.starts_with(&pre_l) || !lower.ends_with(&post_l) {
        return None;
    }
    let mid = text.get(pre.len()..text.len() - post.len())?.trim();
    (!mid.is_empty()).then_some(mid)
}

impl SubjectModel for SymbolicSubject {
    fn apply_batch(&mut self, batch: &EditBatch) -> Result<(), SubjectError> {
        for e in batch.edits() {
            self.overlay.insert((self.canonical(&e.subject), e.relation), e.object);
        }
        Ok(())
    }

    fn query(&mut self, prompt: &str) -> Result<String, SubjectError> {
        Ok(self.answer(prompt).unwrap_or_default())
    }

    fn revert(&mut self) -> Result<(), SubjectError> {
        self.overlay.clear();
        Ok(())
    }
}
