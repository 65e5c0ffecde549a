//! Combining constraints received in a token with local ones.

use thiserror::Error;

use crate::policy::{Constraint, LabelBounds};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("label constraints are contradictory: {bounds}")]
pub struct Unsatisfiable {
    pub bounds: LabelBounds,
}

/// Merged constraint set and the label interval it implies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Merged {
    pub constraints: Vec<Constraint>,
    pub bounds: LabelBounds,
}

/// Intersects the label constraints of both sides into canonical form and
/// unions everything else. Order: labels first, then the rest in first-seen
/// order, local before received.
pub fn merge_constraints(local: &[Constraint], received: &[Constraint]) -> Result<Merged, Unsatisfiable> {
    let labels = local.iter().chain(received).filter_map(|c| match c {
        Constraint::LabelPath(l) => Some(l),
        _ => None,
    });
    let bounds = LabelBounds::from_constraints(labels);
    if !bounds.is_satisfiable() {
        return Err(Unsatisfiable { bounds });
    }
    let mut constraints: Vec<Constraint> =
        bounds.to_constraints().into_iter().map(Constraint::LabelPath).collect();
    for c in local.iter().chain(received) {
        if !matches!(c, Constraint::LabelPath(_)) && !constraints.contains(c) {
            constraints.push(c.clone());
        }
    }
    Ok(Merged { constraints, bounds })
}
