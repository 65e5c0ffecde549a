//! Policy expressions, the label algebra, both textual formats and the
//! matching/decision semantics.

pub mod addr;
pub mod compact;
pub mod expr;
pub mod label;
pub mod matching;
pub mod repository;

pub use addr::{parse_ipv4, Ipv4Cidr, MacAddr};
pub use compact::{format_compact_pe, parse_compact_pe, parse_compact_document};
pub use expr::{
    Action, ConditionField, Constraint, EndpointSelector, PacketKind, PacketPredicate, PathSpec,
    PolicyExpression, PortRange, Proto, SecProfile, Validity,
};
pub use label::{parse_label_constraint, LabelBounds, LabelConstraint, SecurityLabel};
pub use matching::{match_pe, select_policy, AsDescriptor, Decision, FlowContext};
pub use repository::{parse_repository, to_repository, PolicyRecord};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("bad label `{text}` at position {position}: {reason}")]
    Label {
        text: String,
        position: usize,
        reason: &'static str,
    },
    #[error("invalid {what}: `{text}`")]
    Value { what: &'static str, text: String },
    #[error("expected {expected} condition fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("record {index}: unknown field `{field}`")]
    UnknownField { field: String, index: usize },
    #[error("record {index}: missing required field `{field}`")]
    MissingField { field: &'static str, index: usize },
    #[error("duplicate policy id `{0}`")]
    DuplicateId(String),
    #[error("path mixes AS and switch entries: `{0}`")]
    MixedPath(String),
    #[error("malformed repository document: {0}")]
    Document(String),
    #[error("syntax error: {0}")]
    Syntax(String),
}

/// Rejects duplicate ids in a parsed policy set.
pub fn check_unique_ids(pes: &[PolicyExpression]) -> Result<(), PolicyError> {
    let mut seen = std::collections::HashSet::new();
    for pe in pes {
        if !seen.insert(pe.id.as_str()) {
            return Err(PolicyError::DuplicateId(pe.id.clone()));
        }
    }
    Ok(())
}
