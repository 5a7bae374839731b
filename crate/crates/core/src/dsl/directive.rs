//! Directive rules `<phi, psi>` and their derivation from mined rules.

use serde::{Deserialize, Serialize};

use super::path::{PathExpr, Root};
use super::DslError;
use crate::miner::{BodyStep, CandidateRule, Direction};
use crate::store::{MetaTable, RelationId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Anchor {
    S,
    O,
}

impl Anchor {
    pub fn root(self) -> Root {
        match self {
            Anchor::S => Root::S,
            Anchor::O => Root::O,
        }
    }
}

/// `X` is the entity whose `relation` is the anchor.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct XBinding {
    pub relation: RelationId,
    pub anchor: Anchor,
}

impl XBinding {
    /// The binding as an ordinary path, e.g. `father.S`.
    pub fn as_path(&self) -> PathExpr {
        PathExpr::inverse(self.anchor.root(), self.relation.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Mined { rule: CandidateRule },
    Manual {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirectiveRule {
    pub id: String,
    /// Trigger relation.
    pub phi: RelationId,
    pub psi_subject: PathExpr,
    pub psi_relation: RelationId,
    pub psi_object: PathExpr,
    pub x_binding: Option<XBinding>,
    pub enabled: bool,
    pub provenance: Provenance,
}

impl DirectiveRule {
    pub fn new(
        id: impl Into<String>,
        phi: impl Into<RelationId>,
        psi: (PathExpr, &str, PathExpr),
        x_binding: Option<XBinding>,
        provenance: Provenance,
    ) -> Result<Self, DslError> {
        let d = Self {
            id: id.into(),
            phi: phi.into(),
            psi_subject: psi.0,
            psi_relation: psi.1.into(),
            psi_object: psi.2,
            x_binding,
            enabled: true,
            provenance,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), DslError> {
        let invalid = |reason: &str| DslError::InvalidDirective {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.id.is_empty() {
            return Err(invalid("empty id"));
        }
        let uses_x = self.psi_subject.root() == Root::X || self.psi_object.root() == Root::X;
        if uses_x && self.x_binding.is_none() {
            return Err(invalid("X is used but no x_binding defines it"));
        }
        if self.psi_subject == PathExpr::bare(Root::S)
            && self.psi_object == PathExpr::bare(Root::O)
            && self.psi_relation == self.phi
        {
            return Err(invalid("template restates the triggering edit"));
        }
        Ok(())
    }

    /// `<phi: r, psi: (s, r', o)>` plus the X constraint when present.
    pub fn describe(&self) -> String {
        let mut s = format!(
            "<phi: {}, psi: ({}, {}, {})>",
            self.phi, self.psi_subject, self.psi_relation, self.psi_object
        );
        if let Some(x) = &self.x_binding {
            s.push_str(&format!(" where X = {}", x.as_path()));
        }
        s
    }

    fn same_template(&self, other: &Self) -> bool {
        self.phi == other.phi
            && self.psi_subject == other.psi_subject
            && self.psi_relation == other.psi_relation
            && self.psi_object == other.psi_object
            && self.x_binding == other.x_binding
    }
}

/// Outcome of automatic directive derivation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Derivation {
    Derived(Vec<DirectiveRule>),
    /// The rule shape has no automatic template; author one by hand.
    NotAutoDerivable { rule: CandidateRule, reason: String },
}

fn directive_prefix(rule: &CandidateRule) -> String {
    let body: Vec<String> = rule.body.iter().map(ToString::to_string).collect();
    format!("{}<-{}", rule.head, body.join(","))
}

/// Turns a mined rule into executable directives.
///
/// * `R <- (r1, r2)`: `<r1, (S, R, O.r2)>` and `<r2, (X, R, O)>` with X the
///   entity whose `r1` is S. When `r1` is symmetric the anchor-swapped
///   `<r1, (O, R, S.r2)>` is emitted as well.
/// * `R <- inverse(r')`: `<r', (O, R, S)>` and `<R, (O, r', S)>`.
/// * `R <- (r1)`: `<r1, (S, R, O)>`.
pub fn derive_directives(rule: &CandidateRule, meta: &MetaTable) -> Derivation {
    let not = |reason: &str| Derivation::NotAutoDerivable {
        rule: rule.clone(),
        reason: reason.to_string(),
    };
    let head = rule.head.as_str();
    let mined = || Provenance::Mined { rule: rule.clone() };
    let s = || PathExpr::bare(Root::S);
    let o = || PathExpr::bare(Root::O);
    let mut templates: Vec<(RelationId, (PathExpr, &str, PathExpr), Option<XBinding>)> = Vec::new();

    match rule.body.as_slice() {
        [BodyStep {
            relation: r1,
            direction: Direction::Forward,
        }] => templates.push((r1.clone(), (s(), head, o()), None)),
        [BodyStep {
            relation: r1,
            direction: Direction::Inverse,
        }] => {
            templates.push((r1.clone(), (o(), head, s()), None));
            templates.push((rule.head.clone(), (o(), r1.as_str(), s()), None));
        }
        [BodyStep {
            relation: r1,
            direction: Direction::Forward,
        }, BodyStep {
            relation: r2,
            direction: Direction::Forward,
        }] => {
            templates.push((
                r1.clone(),
                (s(), head, PathExpr::forward(Root::O, &[r2.as_str()])),
                None,
            ));
            if meta.is_symmetric(r1) {
                templates.push((
                    r1.clone(),
                    (o(), head, PathExpr::forward(Root::S, &[r2.as_str()])),
                    None,
                ));
            }
            templates.push((
                r2.clone(),
                (PathExpr::bare(Root::X), head, o()),
                Some(XBinding {
                    relation: r1.clone(),
                    anchor: Anchor::S,
                }),
            ));
        }
        [_, _] => return not("mixed-direction two-step bodies need a hand-written directive"),
        _ => return not("bodies longer than two steps need a hand-written directive"),
    }

    let prefix = directive_prefix(rule);
    let mut out: Vec<DirectiveRule> = Vec::new();
    for (phi, psi, x) in templates {
        let id = format!("{prefix}#{}", out.len() + 1);
        match DirectiveRule::new(id, phi, psi, x, mined()) {
            Ok(d) if !out.iter().any(|e| e.same_template(&d)) => out.push(d),
            Ok(_) => {}
            Err(DslError::InvalidDirective { reason, .. }) => return not(&reason),
            Err(other) => return not(&other.to_string()),
        }
    }
    Derivation::Derived(out)
}
