//! Directive rules and the dot-path template language.

mod directive;
mod path;
mod ruleset;
mod verbalize;

pub use directive::{derive_directives, Anchor, Derivation, DirectiveRule, Provenance, XBinding};
pub use path::{parse_path, render_path, PathErrorKind, PathExpr, PathParseError, Root};
pub use ruleset::{RuleSet, RULESET_VERSION};
pub use verbalize::verbalize_rule;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DslError {
    #[error(transparent)]
    Path(#[from] PathParseError),
    #[error("directive `{id}`: {reason}")]
    InvalidDirective { id: String, reason: String },
    #[error("duplicate directive id `{0}`")]
    DuplicateId(String),
    #[error("unsupported ruleset version `{0}`, expected `{RULESET_VERSION}`")]
    Version(String),
    #[error("ruleset entry {index}: {message}")]
    Entry { index: usize, message: String },
    #[error("malformed ruleset: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
