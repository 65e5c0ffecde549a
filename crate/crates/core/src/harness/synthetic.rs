//! Generated chain worlds for sweeps.
//!
//! Domain `i` (1-based) is `AS<i>` with subnet `10.<i>.0.0/16` and a chain of
//! switches `AS<i>-SW1 .. AS<i>-SW<n>`. The last switch of each domain links
//! to the first switch of the next. One source host sits on the first
//! switch of AS1 and one destination host on the last switch of the last
//! domain. Every domain holds a single allow-all expression.

use serde::{Deserialize, Serialize};

use super::scenario::{DomainSpec, HostSpec, LinkSpec, LoadError, PolicySource, Scenario, SwitchSpec, TrafficSpec};
use crate::policy::{Ipv4Cidr, PacketKind, SecurityLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub domains: usize,
    pub switches: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pes: Option<usize>,
    #[serde(default = "default_label")]
    pub label: SecurityLabel,
    #[serde(rename = "type", default = "default_kind")]
    pub kind: PacketKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<u64>,
    #[serde(default)]
    pub new_connection: bool,
}

fn default_label() -> SecurityLabel {
    SecurityLabel::new(2).expect("nonzero")
}

fn default_kind() -> PacketKind {
    PacketKind::Http
}

pub const SOURCE_HOST: &str = "h-src";
pub const DEST_HOST: &str = "h-dst";

fn switch_id(domain: usize, n: usize) -> String {
    format!("AS{domain}-SW{n}")
}

impl SyntheticSpec {
    pub fn chain(domains: usize, switches: usize) -> Self {
        Self {
            domains,
            switches,
            pes: None,
            label: default_label(),
            kind: default_kind(),
            rate: None,
            count: Some(1),
            duration: None,
            new_connection: false,
        }
    }

    /// Replaces the scenario's world with the generated one.
    pub fn apply(&self, s: &mut Scenario) -> Result<(), LoadError> {
        if self.domains == 0 || self.switches == 0 {
            return Err(LoadError::Invalid("synthetic world needs at least one domain and one switch".into()));
        }
        if self.domains > 250 {
            return Err(LoadError::Invalid("synthetic world supports at most 250 domains".into()));
        }
        s.domains = (1..=self.domains).map(|i| self.domain(i)).collect();
        s.interdomain_links = (1..self.domains)
            .map(|i| LinkSpec::new(switch_id(i, self.switches), switch_id(i + 1, 1)))
            .collect();
        let mut t = TrafficSpec::new(SOURCE_HOST, DEST_HOST, self.kind.clone());
        t.rate = self.rate;
        t.count = self.count;
        t.duration = self.duration;
        if t.rate.is_some() && t.duration.is_some() {
            t.count = None;
        }
        t.new_connection = self.new_connection;
        t.sweep_rate = true;
        s.traffic = vec![t];
        if self.pes.is_some() {
            s.pe_count = self.pes;
        }
        s.synthetic = Some(self.clone());
        Ok(())
    }

    fn domain(&self, i: usize) -> DomainSpec {
        let subnet = Ipv4Cidr::new(std::net::Ipv4Addr::new(10, i as u8, 0, 0), 16).expect("valid prefix");
        let switches = (1..=self.switches)
            .map(|n| SwitchSpec {
                id: switch_id(i, n).into(),
                label: self.label,
            })
            .collect();
        let links = (1..self.switches)
            .map(|n| LinkSpec::new(switch_id(i, n), switch_id(i, n + 1)))
            .collect();
        let mut hosts = Vec::new();
        if i == 1 {
            hosts.push(HostSpec {
                id: SOURCE_HOST.into(),
                ip: subnet.nth(10),
                mac: None,
                switch: switch_id(i, 1).into(),
                port: None,
                user: None,
            });
        }
        if i == self.domains {
            hosts.push(HostSpec {
                id: DEST_HOST.into(),
                ip: subnet.nth(20),
                mac: None,
                switch: switch_id(i, self.switches).into(),
                port: None,
                user: None,
            });
        }
        DomainSpec {
            id: format!("AS{i}").into(),
            subnet,
            as_type: "EDU".into(),
            label: self.label,
            key: None,
            switches,
            links,
            hosts,
            users: Default::default(),
            policies: vec![PolicySource::Compact(
                "allow-all=<*, *, *, *, *, *, *, *, *, *, *, *, *>:<allow>".into(),
            )],
            policies_file: None,
            resolved: Vec::new(),
        }
    }
}
