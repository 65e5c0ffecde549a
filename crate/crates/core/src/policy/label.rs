//! Security labels and the relational constraints placed on them.
//!
//! Textual grammar for a single constraint:
//!
//! ```text
//! constraint := "*" | "SL" rank [ "+=" | "-=" ]
//! rank       := [1-9][0-9]*
//! ```
//!
//! A bare `SLn` means exactly `n`, `+=` means at least `n` and `-=` means
//! at most `n`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PolicyError;

/// Ordered trust level `SLn`, `SL1` being the lowest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SecurityLabel(u32);

impl SecurityLabel {
    pub const LOWEST: SecurityLabel = SecurityLabel(1);

    pub fn new(rank: u32) -> Option<Self> {
        (rank >= 1).then_some(Self(rank))
    }

    pub fn rank(self) -> u32 {
        self.0
    }
}

impl fmt::Display for SecurityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SL{}", self.0)
    }
}

impl FromStr for SecurityLabel {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().parse::<LabelConstraint>()? {
            LabelConstraint::Eq(l) => Ok(l),
            _ => Err(PolicyError::Label {
                text: s.to_string(),
                position: 0,
                reason: "expected a bare label such as SL2",
            }),
        }
    }
}

impl TryFrom<String> for SecurityLabel {
    type Error = PolicyError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<SecurityLabel> for String {
    fn from(l: SecurityLabel) -> Self {
        l.to_string()
    }
}

/// Relation between an observed label and a base label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LabelConstraint {
    Any,
    Geq(SecurityLabel),
    Leq(SecurityLabel),
    Eq(SecurityLabel),
}

impl LabelConstraint {
    pub fn satisfies(&self, label: SecurityLabel) -> bool {
        match *self {
            LabelConstraint::Any => true,
            LabelConstraint::Geq(base) => label >= base,
            LabelConstraint::Leq(base) => label <= base,
            LabelConstraint::Eq(base) => label == base,
        }
    }

    pub fn is_any(&self) -> bool {
        matches!(self, LabelConstraint::Any)
    }

    pub fn base(&self) -> Option<SecurityLabel> {
        match *self {
            LabelConstraint::Any => None,
            LabelConstraint::Geq(b) | LabelConstraint::Leq(b) | LabelConstraint::Eq(b) => Some(b),
        }
    }
}

/// Parses the textual label-constraint grammar.
pub fn parse_label_constraint(text: &str) -> Result<LabelConstraint, PolicyError> {
    let err = |position: usize, reason: &'static str| PolicyError::Label {
        text: text.to_string(),
        position,
        reason,
    };
    let lead = text.len() - text.trim_start().len();
    let t = text.trim();
    if t.is_empty() {
        return Err(err(0, "empty label"));
    }
    if t == "*" {
        return Ok(LabelConstraint::Any);
    }
    if t.len() < 2 || !t[..2].eq_ignore_ascii_case("SL") {
        return Err(err(lead, "expected `SL` prefix"));
    }
    let rest = &t[2..];
    let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return Err(err(lead + 2, "expected a rank after `SL`"));
    }
    let rank: u32 = rest[..digits]
        .parse()
        .map_err(|_| err(lead + 2, "rank out of range"))?;
    let label = SecurityLabel::new(rank).ok_or_else(|| err(lead + 2, "rank must be >= 1"))?;
    match &rest[digits..] {
        "" => Ok(LabelConstraint::Eq(label)),
        "+=" => Ok(LabelConstraint::Geq(label)),
        "-=" => Ok(LabelConstraint::Leq(label)),
        _ => Err(err(lead + 2 + digits, "expected `+=`, `-=` or end of label")),
    }
}

impl FromStr for LabelConstraint {
    type Err = PolicyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_label_constraint(s)
    }
}

impl fmt::Display for LabelConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelConstraint::Any => f.write_str("*"),
            LabelConstraint::Geq(b) => write!(f, "{b}+="),
            LabelConstraint::Leq(b) => write!(f, "{b}-="),
            LabelConstraint::Eq(b) => write!(f, "{b}"),
        }
    }
}

impl TryFrom<String> for LabelConstraint {
    type Error = PolicyError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<LabelConstraint> for String {
    fn from(c: LabelConstraint) -> Self {
        c.to_string()
    }
}

/// Conjunction of label constraints, normalized to an inclusive rank interval.
///
/// An empty interval (`lo > hi`) means the conjunction is unsatisfiable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelBounds {
    pub lo: SecurityLabel,
    pub hi: Option<SecurityLabel>,
}

impl Default for LabelBounds {
    fn default() -> Self {
        Self::ANY
    }
}

impl LabelBounds {
    pub const ANY: LabelBounds = LabelBounds {
        lo: SecurityLabel::LOWEST,
        hi: None,
    };

    pub fn from_constraints<'a>(it: impl IntoIterator<Item = &'a LabelConstraint>) -> Self {
        it.into_iter()
            .fold(Self::ANY, |acc, c| acc.intersect(&LabelBounds::from(*c)))
    }

    pub fn intersect(&self, other: &LabelBounds) -> LabelBounds {
        let hi = match (self.hi, other.hi) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        LabelBounds {
            lo: self.lo.max(other.lo),
            hi,
        }
    }

    pub fn is_satisfiable(&self) -> bool {
        self.hi.is_none_or(|hi| self.lo <= hi)
    }

    pub fn is_any(&self) -> bool {
        *self == Self::ANY
    }

    pub fn satisfies(&self, label: SecurityLabel) -> bool {
        label >= self.lo && self.hi.is_none_or(|hi| label <= hi)
    }

    /// Only the lower bound; used where labels express minimum trust.
    pub fn floor(&self) -> LabelBounds {
        LabelBounds {
            lo: self.lo,
            hi: None,
        }
    }

    /// Canonical constraint list equivalent to this interval.
    pub fn to_constraints(&self) -> Vec<LabelConstraint> {
        match self.hi {
            Some(hi) if hi == self.lo => vec![LabelConstraint::Eq(hi)],
            hi => {
                let mut out = Vec::new();
                if self.lo > SecurityLabel::LOWEST {
                    out.push(LabelConstraint::Geq(self.lo));
                }
                if let Some(hi) = hi {
                    out.push(LabelConstraint::Leq(hi));
                }
                out
            }
        }
    }
}

impl From<LabelConstraint> for LabelBounds {
    fn from(c: LabelConstraint) -> Self {
        match c {
            LabelConstraint::Any => LabelBounds::ANY,
            LabelConstraint::Geq(b) => LabelBounds { lo: b, hi: None },
            LabelConstraint::Leq(b) => LabelBounds {
                lo: SecurityLabel::LOWEST,
                hi: Some(b),
            },
            LabelConstraint::Eq(b) => LabelBounds { lo: b, hi: Some(b) },
        }
    }
}

impl fmt::Display for LabelBounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts = self.to_constraints();
        if parts.is_empty() {
            return f.write_str("*");
        }
        let text: Vec<String> = parts.iter().map(ToString::to_string).collect();
        f.write_str(&text.join(";"))
    }
}
