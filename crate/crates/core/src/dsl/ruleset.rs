//! Directive collections and the `chainedit-ruleset/1` file format.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::directive::{DirectiveRule, Provenance, XBinding};
use super::path::PathExpr;
use super::DslError;
use crate::store::RelationId;

pub const RULESET_VERSION: &str = "chainedit-ruleset/1";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RuleSet {
    directives: Vec<DirectiveRule>,
    by_phi: BTreeMap<RelationId, Vec<usize>>,
}

impl RuleSet {
    pub fn new(directives: Vec<DirectiveRule>) -> Result<Self, DslError> {
        let mut ids = HashSet::new();
        let mut by_phi: BTreeMap<RelationId, Vec<usize>> = BTreeMap::new();
        for (i, d) in directives.iter().enumerate() {
            d.validate()?;
            if !ids.insert(d.id.as_str()) {
                return Err(DslError::DuplicateId(d.id.clone()));
            }
            by_phi.entry(d.phi.clone()).or_default().push(i);
        }
        Ok(Self { directives, by_phi })
    }

    pub fn directives(&self) -> &[DirectiveRule] {
        &self.directives
    }

    pub fn len(&self) -> usize {
        self.directives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directives.is_empty()
    }

    /// Directives triggered by `phi`, enabled or not, in ruleset order.
    pub fn triggered_by<'a>(&'a self, phi: &str) -> impl Iterator<Item = &'a DirectiveRule> + 'a {
        self.by_phi
            .get(phi)
            .into_iter()
            .flatten()
            .map(move |&i| &self.directives[i])
    }

    pub fn index(&self) -> &BTreeMap<RelationId, Vec<usize>> {
        &self.by_phi
    }

    pub fn get(&self, id: &str) -> Option<&DirectiveRule> {
        self.directives.iter().find(|d| d.id == id)
    }

    pub fn to_json(&self) -> String {
        let file = RuleSetFile {
            version: RULESET_VERSION.to_string(),
            directives: self.directives.iter().map(DirectiveRecord::from).collect(),
        };
        serde_json::to_string_pretty(&file).expect("ruleset serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, DslError> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        let root: Value = serde_json::from_str(text).map_err(|e| DslError::Format(e.to_string()))?;
        let version = root.get("version").and_then(Value::as_str).unwrap_or("");
        if version != RULESET_VERSION {
            return Err(DslError::Version(version.to_string()));
        }
        let entries = match root.get("directives") {
            None => return Ok(Self::default()),
            Some(Value::Array(a)) => a,
            Some(_) => return Err(DslError::Format("`directives` must be an array".to_string())),
        };
        let mut directives = Vec::with_capacity(entries.len());
        for (index, entry) in entries.iter().enumerate() {
            let entry_err = |message: String| DslError::Entry { index, message };
            let record: DirectiveRecord =
                serde_json::from_value(entry.clone()).map_err(|e| entry_err(e.to_string()))?;
            let d = record.into_directive(index);
            d.validate().map_err(|e| entry_err(e.to_string()))?;
            directives.push(d);
        }
        Self::new(directives)
    }

    pub fn save(&self, path: &Path) -> Result<(), DslError> {
        fs::write(path, self.to_json()).map_err(|source| DslError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, DslError> {
        let text = fs::read_to_string(path).map_err(|source| DslError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct RuleSetFile {
    version: String,
    directives: Vec<DirectiveRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DirectiveRecord {
    #[serde(default)]
    id: Option<String>,
    phi: RelationId,
    psi: (PathExpr, RelationId, PathExpr),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x_binding: Option<XBinding>,
    #[serde(default = "enabled_default")]
    enabled: bool,
    #[serde(default = "manual")]
    provenance: Provenance,
}

fn enabled_default() -> bool {
    true
}

fn manual() -> Provenance {
    Provenance::Manual { note: None }
}

impl From<&DirectiveRule> for DirectiveRecord {
    fn from(d: &DirectiveRule) -> Self {
        Self {
            id: Some(d.id.clone()),
            phi: d.phi.clone(),
            psi: (d.psi_subject.clone(), d.psi_relation.clone(), d.psi_object.clone()),
            x_binding: d.x_binding.clone(),
            enabled: d.enabled,
            provenance: d.provenance.clone(),
        }
    }
}

impl DirectiveRecord {
    fn into_directive(self, index: usize) -> DirectiveRule {
        DirectiveRule {
            id: self.id.unwrap_or_else(|| format!("d{index}")),
            phi: self.phi,
            psi_subject: self.psi.0,
            psi_relation: self.psi.1,
            psi_object: self.psi.2,
            x_binding: self.x_binding,
            enabled: self.enabled,
            provenance: self.provenance,
        }
    }
}
