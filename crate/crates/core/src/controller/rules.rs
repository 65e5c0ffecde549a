//! What a controller knows about its own switches, and rule synthesis.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::dataplane::{FlowAction, FlowKey, FlowMatch, FlowRule, RuleOrigin, PRIORITY_FORWARD};
use crate::ids::{AsId, HostId, SwitchId};
use crate::policy::{MacAddr, Proto, SecProfile};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostAttachment {
    pub id: HostId,
    pub ip: Ipv4Addr,
    pub mac: MacAddr,
    pub switch: SwitchId,
    pub port: u32,
    pub user: Option<String>,
}

/// A link from a local gateway switch to a switch of a neighbouring domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayLink {
    pub switch: SwitchId,
    pub port: u32,
    pub peer_as: AsId,
    pub peer_switch: SwitchId,
}

/// Port-level view of one domain.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DomainView {
    /// `ports[a][b]` is the port on `a` facing local switch `b`.
    pub ports: BTreeMap<SwitchId, BTreeMap<SwitchId, u32>>,
    pub hosts: BTreeMap<Ipv4Addr, HostAttachment>,
    /// Sorted by (peer AS, local switch).
    pub gateways: Vec<GatewayLink>,
    /// Device registry: MAC to user id.
    pub users: BTreeMap<MacAddr, String>,
}

impl DomainView {
    pub fn port(&self, from: &SwitchId, to: &SwitchId) -> Option<u32> {
        self.ports.get(from)?.get(to).copied()
    }

    pub fn host_at(&self, switch: &SwitchId, port: u32) -> Option<&HostAttachment> {
        self.hosts.values().find(|h| &h.switch == switch && h.port == port)
    }

    pub fn gateway_at(&self, switch: &SwitchId, port: u32) -> Option<&GatewayLink> {
        self.gateways.iter().find(|g| &g.switch == switch && g.port == port)
    }

    pub fn gateways_to<'a>(&'a self, peer: &'a AsId) -> impl Iterator<Item = &'a GatewayLink> + 'a {
        self.gateways.iter().filter(move |g| &g.peer_as == peer)
    }
}

/// Which transport fields forwarding rules pin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleGranularity {
    /// Source, destination and service port.
    #[default]
    Service,
    /// Also the client port, so every connection gets its own rules.
    Connection,
}

/// A route through one domain: switches plus the ports it enters and
/// leaves by.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub path: Vec<SwitchId>,
    pub in_port: u32,
    pub out_port: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowModBatch {
    /// The allowing expression, `baseline`, or `defense`.
    pub provenance: String,
    pub mods: Vec<(SwitchId, FlowRule)>,
}

impl FlowModBatch {
    pub fn len(&self) -> usize {
        self.mods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mods.is_empty()
    }
}

fn matchers(key: &FlowKey, granularity: RuleGranularity) -> (FlowMatch, FlowMatch) {
    let ports = !matches!(key.proto, Proto::Arp | Proto::Icmp);
    let client = ports && granularity == RuleGranularity::Connection;
    let fwd = FlowMatch {
        proto: Some(key.proto),
        src_ip: Some(key.src_ip),
        dst_ip: Some(key.dst_ip),
        tp_src: client.then_some(key.tp_src),
        tp_dst: ports.then_some(key.tp_dst),
        ..FlowMatch::default()
    };
    let back = FlowMatch {
        proto: Some(key.proto),
        src_ip: Some(key.dst_ip),
        dst_ip: Some(key.src_ip),
        tp_src: ports.then_some(key.tp_dst),
        tp_dst: client.then_some(key.tp_src),
        ..FlowMatch::default()
    };
    (fwd, back)
}

/// One forward and one return rule per switch of `route`. Return rules come
/// first so a dump lists the response rule ahead of the forward rule.
///
/// Panics if consecutive path switches are not linked in `view`; routes
/// come from path search over the same links.
pub fn synthesize_rules(
    view: &DomainView,
    route: &Route,
    key: &FlowKey,
    granularity: RuleGranularity,
    tags: SecProfile,
    origin: RuleOrigin,
) -> FlowModBatch {
    let (fwd, back) = matchers(key, granularity);
    let path = &route.path;
    let link = |a: &SwitchId, b: &SwitchId| {
        view.port(a, b)
            .unwrap_or_else(|| panic!("route uses missing link {a} - {b}"))
    };
    let rule = |m: &FlowMatch, port| {
        FlowRule::new(PRIORITY_FORWARD, m.clone(), FlowAction::Forward(port), origin.clone()).with_tags(tags)
    };
    let mut mods = Vec::with_capacity(path.len() * 2);
    for (i, s) in path.iter().enumerate() {
        let out = if i == 0 { route.in_port } else { link(s, &path[i - 1]) };
        mods.push((s.clone(), rule(&back, out)));
    }
    for (i, s) in path.iter().enumerate() {
        let out = if i + 1 == path.len() {
            route.out_port
        } else {
            link(s, &path[i + 1])
        };
        mods.push((s.clone(), rule(&fwd, out)));
    }
    let provenance = match &origin {
        RuleOrigin::Policy(id) => id.clone(),
        RuleOrigin::Baseline => "baseline".into(),
        RuleOrigin::Defense => "defense".into(),
        RuleOrigin::Discovery => "discovery".into(),
    };
    FlowModBatch { provenance, mods }
}
