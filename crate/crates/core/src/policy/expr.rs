//! The Policy Expression data model.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::addr::{parse_ipv4, Ipv4Cidr, MacAddr};
use super::label::LabelConstraint;
use super::PolicyError;
use crate::ids::{AsId, SwitchId};

/// Application-level packet classification carried by every simulated packet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PacketKind {
    Arp,
    Icmp,
    Http,
    Https,
    Ftp,
    Ssh,
    Dns,
    Syn,
    Other(String),
}

impl PacketKind {
    pub fn proto(&self) -> Proto {
        match self {
            PacketKind::Arp => Proto::Arp,
            PacketKind::Icmp => Proto::Icmp,
            PacketKind::Dns => Proto::Udp,
            _ => Proto::Tcp,
        }
    }
}

impl FromStr for PacketKind {
    type Err = PolicyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.is_empty() || t.contains(|c: char| c.is_whitespace() || ",;()<>".contains(c)) {
            return Err(PolicyError::Value {
                what: "packet type",
                text: s.to_string(),
            });
        }
        Ok(match t.to_ascii_uppercase().as_str() {
            "ARP" => PacketKind::Arp,
            "ICMP" => PacketKind::Icmp,
            "HTTP" => PacketKind::Http,
            "HTTPS" => PacketKind::Https,
            "FTP" => PacketKind::Ftp,
            "SSH" => PacketKind::Ssh,
            "DNS" => PacketKind::Dns,
            "SYN" => PacketKind::Syn,
            other => PacketKind::Other(other.to_string()),
        })
    }
}

impl fmt::Display for PacketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PacketKind::Arp => "ARP",
            PacketKind::Icmp => "ICMP",
            PacketKind::Http => "HTTP",
            PacketKind::Https => "HTTPS",
            PacketKind::Ftp => "FTP",
            PacketKind::Ssh => "SSH",
            PacketKind::Dns => "DNS",
            PacketKind::Syn => "SYN",
            PacketKind::Other(s) => s,
        };
        f.write_str(s)
    }
}

impl TryFrom<String> for PacketKind {
    type Error = PolicyError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PacketKind> for String {
    fn from(k: PacketKind) -> Self {
        k.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Proto {
    Arp,
    Icmp,
    Tcp,
    Udp,
}

impl FromStr for Proto {
    type Err = PolicyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "arp" => Ok(Proto::Arp),
            "icmp" => Ok(Proto::Icmp),
            "tcp" => Ok(Proto::Tcp),
            "udp" => Ok(Proto::Udp),
            _ => Err(PolicyError::Value {
                what: "protocol",
                text: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for Proto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Proto::Arp => "arp",
            Proto::Icmp => "icmp",
            Proto::Tcp => "tcp",
            Proto::Udp => "udp",
        })
    }
}

/// Predicate over packet attributes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PacketPredicate {
    Type(PacketKind),
    Port(u16),
    Proto(Proto),
}

/// A flow or domain constraint.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Constraint {
    /// Applies to every element of the route chosen for the flow.
    LabelPath(LabelConstraint),
    /// Requests admitted per monitoring window.
    RateThreshold(u32),
    PacketAttr(PacketPredicate),
    /// Named attack signature the flow must carry for the expression to apply.
    Signature(String),
}

impl Constraint {
    /// Kinds that may travel in a policy transfer token.
    pub fn is_flow_scoped(&self) -> bool {
        !matches!(self, Constraint::Signature(_))
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::LabelPath(c) => write!(f, "{c}"),
            Constraint::RateThreshold(n) => write!(f, "rate<={n}"),
            Constraint::PacketAttr(PacketPredicate::Type(k)) => write!(f, "pkt.type={k}"),
            Constraint::PacketAttr(PacketPredicate::Port(p)) => write!(f, "pkt.port={p}"),
            Constraint::PacketAttr(PacketPredicate::Proto(p)) => write!(f, "pkt.proto={p}"),
            Constraint::Signature(s) => write!(f, "sig={s}"),
        }
    }
}

/// Half-open validity window `[start, end)` in simulated ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Validity {
    pub start: u64,
    pub end: u64,
}

impl Validity {
    pub fn new(start: u64, end: u64) -> Option<Self> {
        (start <= end).then_some(Self { start, end })
    }

    pub fn contains(&self, t: u64) -> bool {
        self.start <= t && t < self.end
    }
}

impl fmt::Display for Validity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "time={}..{}", self.start, self.end)
    }
}

/// One token of a constraint list: either a constraint or the validity window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstraintToken {
    Constraint(Constraint),
    Validity(Validity),
}

pub fn parse_constraint_token(token: &str) -> Result<ConstraintToken, PolicyError> {
    let t = token.trim();
    let bad = |what| PolicyError::Value {
        what,
        text: t.to_string(),
    };
    if let Some(rest) = t.strip_prefix("rate<=") {
        let n: u32 = rest.trim().parse().map_err(|_| bad("rate threshold"))?;
        if n == 0 {
            return Err(bad("rate threshold (must be > 0)"));
        }
        return Ok(ConstraintToken::Constraint(Constraint::RateThreshold(n)));
    }
    if let Some(rest) = t.strip_prefix("pkt.") {
        let (key, value) = rest.split_once('=').ok_or_else(|| bad("packet attribute"))?;
        let pred = match key.trim() {
            "type" => PacketPredicate::Type(value.parse()?),
            "port" => PacketPredicate::Port(value.trim().parse().map_err(|_| bad("packet port"))?),
            "proto" => PacketPredicate::Proto(value.parse()?),
            _ => return Err(bad("packet attribute")),
        };
        return Ok(ConstraintToken::Constraint(Constraint::PacketAttr(pred)));
    }
    if let Some(rest) = t.strip_prefix("sig=") {
        let name = rest.trim();
        if name.is_empty() || name.contains(|c: char| c.is_whitespace() || ",;()<>".contains(c)) {
            return Err(bad("signature"));
        }
        return Ok(ConstraintToken::Constraint(Constraint::Signature(name.to_string())));
    }
    if let Some(rest) = t.strip_prefix("time=") {
        let (a, b) = rest.split_once("..").ok_or_else(|| bad("time window"))?;
        let a: u64 = a.trim().parse().map_err(|_| bad("time window"))?;
        let b: u64 = b.trim().parse().map_err(|_| bad("time window"))?;
        return Validity::new(a, b)
            .map(ConstraintToken::Validity)
            .ok_or_else(|| bad("time window (start must not exceed end)"));
    }
    Ok(ConstraintToken::Constraint(Constraint::LabelPath(t.parse()?)))
}

/// Inclusive port range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PortRange {
    pub lo: u16,
    pub hi: u16,
}

impl PortRange {
    pub fn single(p: u16) -> Self {
        Self { lo: p, hi: p }
    }

    pub fn contains(&self, p: u16) -> bool {
        self.lo <= p && p <= self.hi
    }
}

impl FromStr for PortRange {
    type Err = PolicyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PolicyError::Value {
            what: "service port",
            text: s.to_string(),
        };
        let t = s.trim();
        match t.split_once('-') {
            Some((a, b)) => {
                let lo: u16 = a.trim().parse().map_err(|_| bad())?;
                let hi: u16 = b.trim().parse().map_err(|_| bad())?;
                (lo <= hi).then_some(PortRange { lo, hi }).ok_or_else(bad)
            }
            None => t.parse().map(PortRange::single).map_err(|_| bad()),
        }
    }
}

impl fmt::Display for PortRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lo == self.hi {
            write!(f, "{}", self.lo)
        } else {
            write!(f, "{}-{}", self.lo, self.hi)
        }
    }
}

/// Security services requested for a flow. Carried as tags only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SecProfile {
    pub conf: bool,
    pub intg: bool,
}

impl SecProfile {
    pub fn parse_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Result<Self, PolicyError> {
        let mut p = SecProfile::default();
        for tok in tokens {
            match tok.trim().to_ascii_lowercase().as_str() {
                "conf" => p.conf = true,
                "intg" => p.intg = true,
                _ => {
                    return Err(PolicyError::Value {
                        what: "security profile",
                        text: tok.to_string(),
                    })
                }
            }
        }
        Ok(p)
    }

    pub fn tags(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.conf {
            v.push("conf");
        }
        if self.intg {
            v.push("intg");
        }
        v
    }
}

/// Path condition: AS sequence for inter-domain expressions, switch sequence
/// for intra-domain ones.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PathSpec {
    As(Vec<AsId>),
    Switches(Vec<SwitchId>),
}

impl PathSpec {
    /// Classifies raw tokens; mixing AS and switch entries is an error.
    pub fn from_tokens(tokens: &[&str], raw: &str) -> Result<Self, PolicyError> {
        if tokens.is_empty() {
            return Err(PolicyError::Value {
                what: "path",
                text: raw.to_string(),
            });
        }
        let as_count = tokens.iter().filter(|t| AsId::looks_like(t)).count();
        if as_count == tokens.len() {
            Ok(PathSpec::As(tokens.iter().map(|t| AsId::from(*t)).collect()))
        } else if as_count == 0 {
            Ok(PathSpec::Switches(tokens.iter().map(|t| SwitchId::from(*t)).collect()))
        } else {
            Err(PolicyError::MixedPath(raw.to_string()))
        }
    }

    pub fn tokens(&self) -> Vec<String> {
        match self {
            PathSpec::As(v) => v.iter().map(ToString::to_string).collect(),
            PathSpec::Switches(v) => v.iter().map(ToString::to_string).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Action {
    Allow,
    Deny,
}

impl FromStr for Action {
    type Err = PolicyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "allow" | "permit" => Ok(Action::Allow),
            "deny" | "drop" => Ok(Action::Deny),
            _ => Err(PolicyError::Value {
                what: "action",
                text: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Allow => "Allow",
            Action::Deny => "Deny",
        })
    }
}

/// Source or destination side of an expression. `None` is the wildcard.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct EndpointSelector {
    pub as_id: Option<AsId>,
    pub subnet: Option<Ipv4Cidr>,
    pub as_type: Option<String>,
    pub label_req: LabelConstraint,
    /// Entry gateway for the source side, exit gateway for the destination side.
    pub gateway: Option<SwitchId>,
    pub host_ip: Option<Ipv4Addr>,
    pub host_mac: Option<MacAddr>,
}

impl Default for LabelConstraint {
    fn default() -> Self {
        LabelConstraint::Any
    }
}

impl EndpointSelector {
    /// True when the AS-descriptor part (id, subnet, type, label, gateway) is all wildcard.
    pub fn domain_is_wildcard(&self) -> bool {
        self.as_id.is_none()
            && self.subnet.is_none()
            && self.as_type.is_none()
            && self.label_req.is_any()
            && self.gateway.is_none()
    }
}

/// Condition fields of an expression, in template order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConditionField {
    FlowId,
    SourceAs,
    DestAs,
    SourceIp,
    DestIp,
    SourceMac,
    DestMac,
    User,
    FlowCons,
    DomCons,
    Services,
    SecProfile,
    Path,
}

impl ConditionField {
    pub const ALL: [ConditionField; 13] = [
        ConditionField::FlowId,
        ConditionField::SourceAs,
        ConditionField::DestAs,
        ConditionField::SourceIp,
        ConditionField::DestIp,
        ConditionField::SourceMac,
        ConditionField::DestMac,
        ConditionField::User,
        ConditionField::FlowCons,
        ConditionField::DomCons,
        ConditionField::Services,
        ConditionField::SecProfile,
        ConditionField::Path,
    ];
}

/// One rule of the policy template: match attributes, constraints and action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyExpression {
    pub id: String,
    pub flow_id: Option<String>,
    pub source: EndpointSelector,
    pub dest: EndpointSelector,
    pub user: Option<String>,
    pub flow_cons: Vec<Constraint>,
    pub dom_cons: Vec<Constraint>,
    pub services: Option<Vec<PortRange>>,
    pub sec_profile: Option<SecProfile>,
    pub path: Option<PathSpec>,
    pub action: Action,
    pub action_exit: Option<SwitchId>,
    pub validity: Option<Validity>,
}

impl PolicyExpression {
    /// An expression with every condition wildcarded.
    pub fn wildcard(id: impl Into<String>, action: Action) -> Self {
        Self {
            id: id.into(),
            flow_id: None,
            source: EndpointSelector::default(),
            dest: EndpointSelector::default(),
            user: None,
            flow_cons: Vec::new(),
            dom_cons: Vec::new(),
            services: None,
            sec_profile: None,
            path: None,
            action,
            action_exit: None,
            validity: None,
        }
    }

    pub fn is_wildcard(&self, field: ConditionField) -> bool {
        match field {
            ConditionField::FlowId => self.flow_id.is_none(),
            ConditionField::SourceAs => self.source.domain_is_wildcard(),
            ConditionField::DestAs => self.dest.domain_is_wildcard(),
            ConditionField::SourceIp => self.source.host_ip.is_none(),
            ConditionField::DestIp => self.dest.host_ip.is_none(),
            ConditionField::SourceMac => self.source.host_mac.is_none(),
            ConditionField::DestMac => self.dest.host_mac.is_none(),
            ConditionField::User => self.user.is_none(),
            ConditionField::FlowCons => self.flow_cons.is_empty(),
            ConditionField::DomCons => self.dom_cons.is_empty(),
            ConditionField::Services => self.services.is_none(),
            ConditionField::SecProfile => self.sec_profile.is_none(),
            ConditionField::Path => self.path.is_none(),
        }
    }

    /// Copy of this expression with one condition field replaced by `*`.
    pub fn with_wildcard(&self, field: ConditionField) -> Self {
        let mut pe = self.clone();
        match field {
            ConditionField::FlowId => pe.flow_id = None,
            ConditionField::SourceAs => {
                let s = &mut pe.source;
                s.as_id = None;
                s.subnet = None;
                s.as_type = None;
                s.label_req = LabelConstraint::Any;
                s.gateway = None;
            }
            ConditionField::DestAs => {
                let d = &mut pe.dest;
                d.as_id = None;
                d.subnet = None;
                d.as_type = None;
                d.label_req = LabelConstraint::Any;
                d.gateway = None;
            }
            ConditionField::SourceIp => pe.source.host_ip = None,
            ConditionField::DestIp => pe.dest.host_ip = None,
            ConditionField::SourceMac => pe.source.host_mac = None,
            ConditionField::DestMac => pe.dest.host_mac = None,
            ConditionField::User => pe.user = None,
            ConditionField::FlowCons => pe.flow_cons.clear(),
            ConditionField::DomCons => pe.dom_cons.clear(),
            ConditionField::Services => pe.services = None,
            ConditionField::SecProfile => pe.sec_profile = None,
            ConditionField::Path => pe.path = None,
        }
        pe
    }

    /// Number of non-wildcard condition fields.
    pub fn specificity(&self) -> usize {
        ConditionField::ALL
            .iter()
            .filter(|f| !self.is_wildcard(**f))
            .count()
    }

    pub fn constraints(&self) -> impl Iterator<Item = &Constraint> {
        self.flow_cons.iter().chain(self.dom_cons.iter())
    }

    pub fn switch_path(&self) -> Option<&[SwitchId]> {
        match &self.path {
            Some(PathSpec::Switches(v)) => Some(v),
            _ => None,
        }
    }

    pub fn as_path(&self) -> Option<&[AsId]> {
        match &self.path {
            Some(PathSpec::As(v)) => Some(v),
            _ => None,
        }
    }

    pub fn allows_port(&self, port: u16) -> bool {
        self.services
            .as_ref()
            .is_none_or(|s| s.iter().any(|r| r.contains(port)))
    }
}

/// Normalizes a service list: sorted, duplicates removed.
pub fn normalize_services(mut v: Vec<PortRange>) -> Vec<PortRange> {
    v.sort();
    v.dedup();
    v
}

pub(crate) fn parse_host_ip(tok: &str) -> Result<Ipv4Addr, PolicyError> {
    parse_ipv4(tok)
}
