//! Scenario documents: schema, loading and reference checks.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::synthetic::SyntheticSpec;
use crate::controller::{CostModel, RuleGranularity};
use crate::defense::{CapacityModel, DefenseError, HistoryConfig, Response};
use crate::ids::{AsId, HostId, SwitchId};
use crate::policy::addr::lenient_ip;
use crate::policy::{
    parse_compact_document, parse_compact_pe, parse_ipv4, parse_repository, Ipv4Cidr, MacAddr,
    PacketKind, PolicyError, PolicyExpression, PolicyRecord, SecurityLabel,
};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("domain {domain}: policy error: {source}")]
    Policy { domain: AsId, source: PolicyError },
    #[error("{context} references undefined {kind} `{id}`")]
    Dangling {
        kind: &'static str,
        id: String,
        context: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("defense configuration: {0}")]
    Defense(#[from] DefenseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Rules installed on first-packet misses.
    #[default]
    Reactive,
    /// Rules compiled by a warm-up pass; misses then drop.
    Proactive,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Reactive => "reactive",
            Mode::Proactive => "proactive",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "reactive" => Ok(Mode::Reactive),
            "proactive" => Ok(Mode::Proactive),
            _ => Err(format!("unknown mode `{s}` (reactive, proactive)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Timing {
    /// Per link traversal, host links included.
    pub link: u64,
    /// Switch to controller, and controller to switch.
    pub channel: u64,
}

impl Default for Timing {
    fn default() -> Self {
        Self { link: 1, channel: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefenseSpec {
    pub capacity: CapacityModel,
    #[serde(default = "default_window")]
    pub window: u64,
    #[serde(default)]
    pub history: HistoryConfig,
    #[serde(default)]
    pub response: Response,
    #[serde(default = "one")]
    pub instances: u64,
}

fn default_window() -> u64 {
    TICKS_PER_SECOND
}

fn one() -> u64 {
    1
}

fn yes() -> bool {
    true
}

fn default_capacity() -> usize {
    crate::dataplane::DEFAULT_TABLE_CAPACITY
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchSpec {
    pub id: SwitchId,
    pub label: SecurityLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub a: SwitchId,
    pub b: SwitchId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_port: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_port: Option<u32>,
}

impl LinkSpec {
    pub fn new(a: impl Into<SwitchId>, b: impl Into<SwitchId>) -> Self {
        Self {
            a: a.into(),
            b: b.into(),
            a_port: None,
            b_port: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostSpec {
    pub id: HostId,
    #[serde(with = "lenient_ip")]
    pub ip: Ipv4Addr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mac: Option<MacAddr>,
    pub switch: SwitchId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<String>,
}

/// An inline policy: compact text or a repository record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicySource {
    Compact(String),
    Record(PolicyRecord),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub id: AsId,
    pub subnet: Ipv4Cidr,
    #[serde(rename = "type")]
    pub as_type: String,
    pub label: SecurityLabel,
    /// Pre-shared tagging key; derived from the id when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    pub switches: Vec<SwitchSpec>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub hosts: Vec<HostSpec>,
    /// Device registry, MAC to user.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub users: BTreeMap<MacAddr, String>,
    #[serde(default)]
    pub policies: Vec<PolicySource>,
    /// Repository file relative to the scenario: `.json` records or compact
    /// text, one expression per line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policies_file: Option<String>,
    #[serde(skip)]
    pub resolved: Vec<PolicyExpression>,
}

impl DomainSpec {
    pub fn key(&self) -> String {
        self.key.clone().unwrap_or_else(|| format!("key/{}", self.id))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub src: HostId,
    /// Host id or IPv4 address.
    pub dst: String,
    #[serde(rename = "type", default = "default_kind")]
    pub kind: PacketKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sport: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dport: Option<u16>,
    #[serde(default)]
    pub start: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
    /// Packets per simulated second.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<u64>,
    /// Fresh client port per packet.
    #[serde(default)]
    pub new_connection: bool,
    #[serde(default = "default_size")]
    pub size: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<String>,
    /// Destination answers each delivered packet.
    #[serde(default)]
    pub reply: bool,
    /// Uniform jitter within each send interval.
    #[serde(default)]
    pub jitter: bool,
    /// Rate follows the `request_rate` sweep axis.
    #[serde(default)]
    pub sweep_rate: bool,
}

fn default_kind() -> PacketKind {
    PacketKind::Http
}

fn default_size() -> u32 {
    512
}

impl TrafficSpec {
    pub fn new(src: impl Into<HostId>, dst: impl Into<String>, kind: PacketKind) -> Self {
        Self {
            label: None,
            src: src.into(),
            dst: dst.into(),
            kind,
            sport: None,
            dport: None,
            start: 0,
            count: None,
            rate: None,
            interval: None,
            duration: None,
            new_connection: false,
            size: default_size(),
            signature: None,
            reply: false,
            jitter: false,
            sweep_rate: false,
        }
    }

    pub fn service_port(&self) -> u16 {
        self.dport.unwrap_or(match self.kind {
            PacketKind::Http | PacketKind::Syn => 80,
            PacketKind::Https => 443,
            PacketKind::Ftp => 21,
            PacketKind::Ssh => 22,
            PacketKind::Dns => 53,
            _ => 0,
        })
    }

    /// Mean send interval in ticks.
    pub fn period(&self) -> u64 {
        match (self.interval, self.rate) {
            (Some(i), _) => i.max(1),
            (None, Some(r)) if r > 0.0 => ((TICKS_PER_SECOND as f64 / r).round() as u64).max(1),
            _ => 1000,
        }
    }

    /// Send time of packet `i` relative to `start`. Rates are spread
    /// exactly: packet `i` goes at `floor(i / rate)` seconds.
    pub fn offset(&self, i: u64) -> u64 {
        match (self.interval, self.rate) {
            (None, Some(r)) if r > 0.0 => (i as f64 * TICKS_PER_SECOND as f64 / r).floor() as u64,
            _ => i * self.period(),
        }
    }

    pub fn packet_count(&self) -> u64 {
        match (self.count, self.duration, self.interval, self.rate) {
            (Some(c), ..) => c,
            (None, Some(d), None, Some(r)) if r > 0.0 => {
                (d as f64 * r / TICKS_PER_SECOND as f64).ceil() as u64
            }
            (None, Some(d), ..) => d.div_ceil(self.period()),
            _ => 1,
        }
    }
}

/// One tick is a simulated microsecond.
pub const TICKS_PER_SECOND: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub at: u64,
    pub a: SwitchId,
    pub b: SwitchId,
}

/// Mutation applied to the augmentation of packets crossing a link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Mutation {
    FlipTagBit { bit: usize },
    ReverseVisited,
    DropFirstVisited,
    AppendVisited { domain: AsId },
    FlowId { value: String },
    Origin { domain: AsId },
    StripHandle,
    ClearPttConstraints,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TamperSpec {
    pub from: SwitchId,
    pub to: SwitchId,
    pub mutation: Mutation,
}

/// Overrides producing a labelled run of the same world.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pbsa: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<Response>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub granularity: Option<RuleGranularity>,
    /// Expression ids to drop, as `AS/id`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub remove_policies: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default = "one")]
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "yes")]
    pub pbsa: bool,
    #[serde(default)]
    pub granularity: RuleGranularity,
    /// Last tick processed; packets still in flight then expire.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(default)]
    pub timing: Timing,
    #[serde(default)]
    pub cost: CostModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defense: Option<DefenseSpec>,
    #[serde(default = "default_capacity")]
    pub table_capacity: usize,
    /// Pad every repository to at least this many expressions with
    /// expressions that never match.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pe_count: Option<usize>,
    #[serde(default)]
    pub domains: Vec<DomainSpec>,
    #[serde(default)]
    pub interdomain_links: Vec<LinkSpec>,
    #[serde(default)]
    pub traffic: Vec<TrafficSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub faults: Vec<FaultSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tamper: Vec<TamperSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<Variant>,
    /// Generated world; replaces `domains`, links and traffic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    /// Directory relative policy files are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, LoadError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Scenario::from_json(&text, path.parent())
}

impl Scenario {
    /// Parses and resolves a scenario. Relative policy files are looked up
    /// under `base`.
    pub fn from_json(text: &str, base: Option<&Path>) -> Result<Scenario, LoadError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| LoadError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        s.base_dir = base.map(Path::to_path_buf);
        s.rebuild()?;
        Ok(s)
    }

    /// Regenerates a synthetic world, re-resolves policies and validates.
    /// Call after editing a loaded scenario.
    pub fn rebuild(&mut self) -> Result<(), LoadError> {
        if let Some(spec) = self.synthetic.clone() {
            spec.apply(self)?;
        }
        let base = self.base_dir.clone();
        self.resolve_policies(base.as_deref())?;
        self.validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    fn resolve_policies(&mut self, base: Option<&Path>) -> Result<(), LoadError> {
        for d in &mut self.domains {
            let err = |source| LoadError::Policy {
                domain: d.id.clone(),
                source,
            };
            let mut pes = Vec::new();
            if let Some(file) = &d.policies_file {
                let p = base.map_or_else(|| PathBuf::from(file), |b| b.join(file));
                let text = std::fs::read_to_string(&p).map_err(|source| LoadError::Io { path: p.clone(), source })?;
                let parsed = if p.extension().is_some_and(|e| e == "json") {
                    parse_repository(&text)
                } else {
                    parse_compact_document(&text)
                };
                pes.extend(parsed.map_err(err)?);
            }
            for (i, src) in d.policies.iter().enumerate() {
                let mut pe = match src {
                    PolicySource::Compact(t) => parse_compact_pe(t).map_err(err)?,
                    PolicySource::Record(r) => r.to_expression().map_err(err)?,
                };
                if pe.id.is_empty() {
                    pe.id = format!("P{}", i + 1);
                }
                pes.push(pe);
            }
            crate::policy::check_unique_ids(&pes).map_err(err)?;
            if let Some(n) = self.pe_count {
                pad_policies(&mut pes, n);
            }
            d.resolved = pes;
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), LoadError> {
        let invalid = |m: String| Err(LoadError::Invalid(m));
        let dangling = |kind, id: &dyn ToString, context: String| {
            Err(LoadError::Dangling {
                kind,
                id: id.to_string(),
                context,
            })
        };
        if self.domains.is_empty() {
            return invalid("no domains".into());
        }
        let mut owner: BTreeMap<&SwitchId, &AsId> = BTreeMap::new();
        let mut domain_ids = BTreeSet::new();
        let mut host_ids = BTreeSet::new();
        for d in &self.domains {
            if !domain_ids.insert(&d.id) {
                return invalid(format!("duplicate domain `{}`", d.id));
            }
            if d.key().is_empty() {
                return invalid(format!("domain {} has an empty key", d.id));
            }
            if d.switches.is_empty() {
                return invalid(format!("domain {} has no switches", d.id));
            }
            for s in &d.switches {
                if owner.insert(&s.id, &d.id).is_some() {
                    return invalid(format!("duplicate switch `{}`", s.id));
                }
            }
        }
        let other = self.domains.iter().flat_map(|a| {
            self.domains
                .iter()
                .filter(move |b| a.id < b.id && (a.subnet.contains(b.subnet.network()) || b.subnet.contains(a.subnet.network())))
                .map(move |b| (a, b))
        });
        if let Some((a, b)) = other.into_iter().next() {
            return invalid(format!("subnets of {} and {} overlap", a.id, b.id));
        }
        for d in &self.domains {
            for l in &d.links {
                for s in [&l.a, &l.b] {
                    if owner.get(s) != Some(&&d.id) {
                        return dangling("switch", s, format!("link in domain {}", d.id));
                    }
                }
                if l.a == l.b {
                    return invalid(format!("self link on {}", l.a));
                }
            }
            for h in &d.hosts {
                if !host_ids.insert(&h.id) {
                    return invalid(format!("duplicate host `{}`", h.id));
                }
                if owner.get(&h.switch) != Some(&&d.id) {
                    return dangling("switch", &h.switch, format!("host {}", h.id));
                }
                if !d.subnet.contains(h.ip) {
                    return invalid(format!("host {} ({}) is outside {} {}", h.id, h.ip, d.id, d.subnet));
                }
            }
        }
        for l in &self.interdomain_links {
            for s in [&l.a, &l.b] {
                if !owner.contains_key(s) {
                    return dangling("switch", s, "inter-domain link".into());
                }
            }
            if owner[&l.a] == owner[&l.b] {
                return invalid(format!("inter-domain link {} - {} stays inside {}", l.a, l.b, owner[&l.a]));
            }
        }
        for f in &self.faults {
            for s in [&f.a, &f.b] {
                if !owner.contains_key(s) {
                    return dangling("switch", s, format!("fault at {}", f.at));
                }
            }
        }
        for t in &self.tamper {
            for s in [&t.from, &t.to] {
                if !owner.contains_key(s) {
                    return dangling("switch", s, "tamper rule".into());
                }
            }
        }
        for (i, t) in self.traffic.iter().enumerate() {
            if !host_ids.contains(&t.src) {
                return dangling("host", &t.src, format!("traffic[{i}]"));
            }
            if !host_ids.iter().any(|h| h.as_str() == t.dst) && parse_ipv4(&t.dst).is_err() {
                return dangling("host", &t.dst, format!("traffic[{i}]"));
            }
            if t.rate.is_some_and(|r| !(r > 0.0) || !r.is_finite()) {
                return invalid(format!("traffic[{i}]: rate must be positive"));
            }
        }
        for v in &self.variants {
            for r in &v.remove_policies {
                let found = r.split_once('/').is_some_and(|(a, id)| {
                    self.domains
                        .iter()
                        .any(|d| d.id.as_str() == a && d.resolved.iter().any(|pe| pe.id == id))
                });
                if !found {
                    return dangling("policy", r, format!("variant {}", v.name));
                }
            }
        }
        if let Some(def) = &self.defense {
            def.capacity.validate()?;
            if def.instances == 0 {
                return Err(DefenseError::NonPositive("instances").into());
            }
        }
        if self.table_capacity == 0 {
            return invalid("table_capacity must be positive".into());
        }
        Ok(())
    }

    pub fn domain(&self, id: &str) -> Option<&DomainSpec> {
        self.domains.iter().find(|d| d.id.as_str() == id)
    }

    /// Variants to run: the declared ones, or a single unnamed default.
    pub fn variant_list(&self) -> Vec<Variant> {
        if self.variants.is_empty() {
            vec![Variant {
                name: "default".into(),
                ..Variant::default()
            }]
        } else {
            self.variants.clone()
        }
    }

    /// A copy with the variant's overrides applied.
    pub fn with_variant(&self, v: &Variant) -> Scenario {
        let mut s = self.clone();
        if let Some(p) = v.pbsa {
            s.pbsa = p;
        }
        if let Some(m) = v.mode {
            s.mode = m;
        }
        if let Some(g) = v.granularity {
            s.granularity = g;
        }
        if let (Some(r), Some(def)) = (v.response, s.defense.as_mut()) {
            def.response = r;
        }
        for r in &v.remove_policies {
            if let Some((a, id)) = r.split_once('/') {
                for d in s.domains.iter_mut().filter(|d| d.id.as_str() == a) {
                    d.resolved.retain(|pe| pe.id != id);
                }
            }
        }
        s.variants.clear();
        s
    }

    /// Drops one expression; returns whether it existed.
    pub fn remove_policy(&mut self, domain: &str, id: &str) -> bool {
        let Some(d) = self.domains.iter_mut().find(|d| d.id.as_str() == domain) else {
            return false;
        };
        let before = d.resolved.len();
        d.resolved.retain(|pe| pe.id != id);
        d.resolved.len() != before
    }

    /// Re-pads repositories to `n` expressions.
    pub fn set_pe_count(&mut self, n: usize) {
        self.pe_count = Some(n);
        for d in &mut self.domains {
            d.resolved.retain(|pe| !pe.id.starts_with(PAD_PREFIX));
            pad_policies(&mut d.resolved, n);
        }
    }
}

const PAD_PREFIX: &str = "pad-";

/// Appends allow expressions pinned to source addresses in 240.0.0.0/4,
/// which no host uses, until `pes` has `n` entries.
fn pad_policies(pes: &mut Vec<PolicyExpression>, n: usize) {
    let mut i = 0u32;
    while pes.len() < n {
        let ip = Ipv4Addr::from(0xF000_0000u32 + i);
        let pe = parse_compact_pe(&format!(
            "{PAD_PREFIX}{i}=<*, *, *, {ip}, *, *, *, *, *, *, *, *, *>:<allow>"
        ))
        .expect("padding expression parses");
        pes.push(pe);
        i += 1;
    }
}
