use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::packet::Packet;
use crate::policy::{MacAddr, PacketKind, Proto, SecProfile};

pub const PRIORITY_DEFENSE: u32 = 50_000;
pub const PRIORITY_DISCOVERY: u32 = 40_000;
pub const PRIORITY_FORWARD: u32 = 1_000;

/// Header fields a rule matches on; `None` is a wildcard.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlowMatch {
    pub in_port: Option<u32>,
    pub proto: Option<Proto>,
    pub packet_type: Option<PacketKind>,
    pub src_mac: Option<MacAddr>,
    pub dst_mac: Option<MacAddr>,
    pub src_ip: Option<Ipv4Addr>,
    pub dst_ip: Option<Ipv4Addr>,
    pub tp_src: Option<u16>,
    pub tp_dst: Option<u16>,
}

impl FlowMatch {
    pub fn matches(&self, p: &Packet, in_port: u32) -> bool {
        self.in_port.is_none_or(|x| x == in_port)
            && self.proto.is_none_or(|x| x == p.proto())
            && self.packet_type.as_ref().is_none_or(|x| x == &p.kind)
            && self.src_mac.is_none_or(|x| x == p.src_mac)
            && self.dst_mac.is_none_or(|x| Some(x) == p.dst_mac)
            && self.src_ip.is_none_or(|x| x == p.src_ip)
            && self.dst_ip.is_none_or(|x| x == p.dst_ip)
            && self.tp_src.is_none_or(|x| x == p.tp_src)
            && self.tp_dst.is_none_or(|x| x == p.tp_dst)
    }
}

impl FlowMatch {
    /// Bit set of the non-wildcard fields.
    pub fn mask(&self) -> u16 {
        [
            self.in_port.is_some(),
            self.proto.is_some(),
            self.packet_type.is_some(),
            self.src_mac.is_some(),
            self.dst_mac.is_some(),
            self.src_ip.is_some(),
            self.dst_ip.is_some(),
            self.tp_src.is_some(),
            self.tp_dst.is_some(),
        ]
        .iter()
        .enumerate()
        .fold(0, |m, (i, set)| m | (u16::from(*set) << i))
    }

    /// The exact match with shape `mask` that `p` would hit, if any.
    pub fn project(p: &Packet, in_port: u32, mask: u16) -> Option<FlowMatch> {
        let on = |i: u16| mask & (1 << i) != 0;
        let dst_mac = if on(4) { Some(p.dst_mac?) } else { None };
        Some(FlowMatch {
            in_port: on(0).then_some(in_port),
            proto: on(1).then(|| p.proto()),
            packet_type: on(2).then(|| p.kind.clone()),
            src_mac: on(3).then_some(p.src_mac),
            dst_mac,
            src_ip: on(5).then_some(p.src_ip),
            dst_ip: on(6).then_some(p.dst_ip),
            tp_src: on(7).then_some(p.tp_src),
            tp_dst: on(8).then_some(p.tp_dst),
        })
    }
}

impl fmt::Display for FlowMatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        if let Some(p) = self.proto {
            parts.push(p.to_string());
        }
        if let Some(x) = self.in_port {
            parts.push(format!("in_port={x}"));
        }
        if let Some(x) = &self.packet_type {
            parts.push(format!("app={x}"));
        }
        if let Some(x) = self.src_mac {
            parts.push(format!("dl_src={x}"));
        }
        if let Some(x) = self.dst_mac {
            parts.push(format!("dl_dst={x}"));
        }
        if let Some(x) = self.src_ip {
            parts.push(format!("nw_src={x}"));
        }
        if let Some(x) = self.dst_ip {
            parts.push(format!("nw_dst={x}"));
        }
        if let Some(x) = self.tp_src {
            parts.push(format!("tp_src={x}"));
        }
        if let Some(x) = self.tp_dst {
            parts.push(format!("tp_dst={x}"));
        }
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlowAction {
    Forward(u32),
    Drop,
    SendToController,
}

impl fmt::Display for FlowAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowAction::Forward(p) => write!(f, "output:{p}"),
            FlowAction::Drop => f.write_str("drop"),
            FlowAction::SendToController => f.write_str("CONTROLLER"),
        }
    }
}

/// Why a rule exists.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuleOrigin {
    Discovery,
    /// Installed for an allow decision of the named expression.
    Policy(String),
    /// Installed by the allow-all baseline controller.
    Baseline,
    Defense,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRule {
    pub priority: u32,
    pub matcher: FlowMatch,
    pub action: FlowAction,
    pub tags: SecProfile,
    pub origin: RuleOrigin,
    pub packets: u64,
    pub bytes: u64,
}

impl FlowRule {
    pub fn new(priority: u32, matcher: FlowMatch, action: FlowAction, origin: RuleOrigin) -> Self {
        Self {
            priority,
            matcher,
            action,
            tags: SecProfile::default(),
            origin,
            packets: 0,
            bytes: 0,
        }
    }

    pub fn with_tags(mut self, tags: SecProfile) -> Self {
        self.tags = tags;
        self
    }

    /// Controller-installed rule that punts ARP for discovery.
    pub fn arp_discovery() -> Self {
        let m = FlowMatch {
            proto: Some(Proto::Arp),
            ..FlowMatch::default()
        };
        FlowRule::new(PRIORITY_DISCOVERY, m, FlowAction::SendToController, RuleOrigin::Discovery)
    }

    /// Drop everything entering on `in_port`.
    pub fn block_port(in_port: u32) -> Self {
        let m = FlowMatch {
            in_port: Some(in_port),
            ..FlowMatch::default()
        };
        FlowRule::new(PRIORITY_DEFENSE, m, FlowAction::Drop, RuleOrigin::Defense)
    }
}

/// One line of a flow dump: `priority=N,<match> actions=<action>[ tags=..]`.
impl fmt::Display for FlowRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "priority={}", self.priority)?;
        let m = self.matcher.to_string();
        if !m.is_empty() {
            write!(f, ",{m}")?;
        }
        write!(f, " actions={}", self.action)?;
        let tags = self.tags.tags();
        if !tags.is_empty() {
            write!(f, " tags={}", tags.join(","))?;
        }
        Ok(())
    }
}
