//! The per-domain pipeline: defense check, policy evaluation, route
//! resolution, rule synthesis and handle bookkeeping.

mod rules;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use rules::{
    synthesize_rules, DomainView, FlowModBatch, GatewayLink, HostAttachment, Route,
    RuleGranularity,
};

use crate::dataplane::{FlowKey, FlowRule, Packet, RuleOrigin};
use crate::defense::{FloodDetector, HostKey, Verdict};
use crate::ids::{AsId, SwitchId};
use crate::interdomain::{merge_constraints, AugmentedHeader, Handle, KeyRing, PolicyTransferToken};
use crate::policy::{
    select_policy, Action, AsDescriptor, Constraint, Decision, FlowContext, LabelBounds,
    PacketKind, PolicyExpression, SecProfile,
};
use crate::topology::{find_as_paths, find_switch_path, AsMap, TopologyRepository};

/// Why a packet did not reach its destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Denied by policy, or its constraints cannot hold here.
    Policy,
    Defense,
    /// No route satisfies the constraints.
    NoPath,
    /// Destination unknown to the domain.
    Unreachable,
    /// Handle missing or failing validation.
    Tamper,
    LinkDown,
    /// Table miss with misses configured to drop.
    TableMiss,
    TableFull,
    /// Displaced from a switch's miss buffer by a newer packet of its flow.
    BufferEvicted,
    /// Still in flight when the run ended.
    Expired,
}

impl DropReason {
    pub const ALL: [DropReason; 10] = [
        DropReason::Policy,
        DropReason::Defense,
        DropReason::NoPath,
        DropReason::Unreachable,
        DropReason::Tamper,
        DropReason::LinkDown,
        DropReason::TableMiss,
        DropReason::TableFull,
        DropReason::BufferEvicted,
        DropReason::Expired,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Policy => "policy",
            DropReason::Defense => "defense",
            DropReason::NoPath => "no_path",
            DropReason::Unreachable => "unreachable",
            DropReason::Tamper => "tamper",
            DropReason::LinkDown => "link_down",
            DropReason::TableMiss => "table_miss",
            DropReason::TableFull => "table_full",
            DropReason::BufferEvicted => "buffer_evicted",
            DropReason::Expired => "expired",
        }
    }
}

impl std::fmt::Display for DropReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Controller work in event ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub base: u64,
    pub per_pe: u64,
    pub per_switch: u64,
    pub per_rule: u64,
    pub defense: u64,
    pub handle: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            base: 100,
            per_pe: 1,
            per_switch: 2,
            per_rule: 1,
            defense: 1,
            handle: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Off: allow everything along shortest paths.
    pub pbsa: bool,
    /// Whether the flood monitor screens packet_ins from hosts.
    pub defense: bool,
    pub granularity: RuleGranularity,
    pub cost: CostModel,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            pbsa: true,
            defense: false,
            granularity: RuleGranularity::Service,
            cost: CostModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketIn {
    pub switch: SwitchId,
    pub in_port: u32,
    pub packet: Packet,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Install(FlowModBatch),
    Drop {
        reason: DropReason,
        /// Block rules to push, from a drop-rule defense response.
        block: Option<FlowModBatch>,
    },
    /// Discovery traffic answered by the controller itself.
    Answered,
}

/// One record per packet_in. The simulator fills the queueing fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerEvent {
    pub arrival: u64,
    pub finish: u64,
    pub latency: u64,
    pub service: u64,
    pub domain: AsId,
    pub switch: SwitchId,
    pub in_port: u32,
    pub packet_id: u64,
    pub flow: String,
    pub traversed: Vec<AsId>,
    pub matched_pe: Option<String>,
    pub verdict: String,
    pub reason: Option<DropReason>,
    pub detail: String,
    pub path: Vec<SwitchId>,
    pub next_as: Option<AsId>,
    pub rules: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketInResult {
    pub outcome: Outcome,
    pub event: ControllerEvent,
}

/// A security-relevant rejection, such as a bad token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecurityEvent {
    pub tick: u64,
    pub domain: AsId,
    pub flow: String,
    pub detail: String,
}

pub struct Controller {
    pub desc: AsDescriptor,
    pub policies: Vec<PolicyExpression>,
    pub topo: TopologyRepository,
    pub as_map: AsMap,
    pub view: DomainView,
    pub keys: KeyRing,
    pub monitor: Box<dyn FloodDetector>,
    pub config: ControllerConfig,
    /// Headers to attach to packets of a flow leaving this domain.
    pub outbound: BTreeMap<FlowKey, AugmentedHeader>,
    /// Handles of flows this domain accepted for local delivery, extended
    /// with this domain.
    pub accepted: BTreeMap<FlowKey, Handle>,
    pub security_log: Vec<SecurityEvent>,
}

struct Work {
    cost: u64,
    event: ControllerEvent,
}

impl Work {
    fn drop(mut self, reason: DropReason, detail: impl Into<String>) -> PacketInResult {
        self.event.verdict = "drop".into();
        self.event.reason = Some(reason);
        self.event.detail = detail.into();
        self.finish(Outcome::Drop { reason, block: None })
    }

    fn finish(mut self, outcome: Outcome) -> PacketInResult {
        self.event.service = self.cost;
        PacketInResult {
            outcome,
            event: self.event,
        }
    }
}

impl Controller {
    pub fn id(&self) -> &AsId {
        &self.desc.id
    }

    /// Descriptor of the domain owning `ip`, as far as this controller knows.
    pub fn resolve(&self, ip: std::net::Ipv4Addr) -> Option<AsDescriptor> {
        if self.desc.subnet.contains(ip) {
            return Some(self.desc.clone());
        }
        self.topo.resolve(ip).map(|e| AsDescriptor {
            id: e.as_id.clone(),
            subnet: e.subnet,
            as_type: e.as_type.clone(),
            label: e.sec_label,
        })
    }

    /// Handle for a flow originating here.
    pub fn create_handle(&self, flow_id: &str) -> Handle {
        Handle::create(&self.keys, flow_id)
    }

    /// Validates `handle` as received here and appends this domain.
    pub fn extend_handle(
        &self,
        handle: &Handle,
        flow_id: &str,
    ) -> Result<Handle, crate::interdomain::IntegrityError> {
        handle.validate(&self.keys, |a| self.topo.is_neighbor(a), flow_id)?;
        Ok(handle.extend(&self.keys))
    }

    /// Token delegating the flow-scoped part of an allow decision.
    pub fn create_ptt(&self, decision: &Decision, flow_id: &str, origin: &AsId) -> Option<PolicyTransferToken> {
        if !decision.is_allow() {
            return None;
        }
        PolicyTransferToken::issue(&self.keys, flow_id, origin, &decision.ptt_constraints)
    }

    pub fn context(&self, pi: &PacketIn, traversed: Vec<AsId>) -> FlowContext {
        let p = &pi.packet;
        let user = self
            .view
            .users
            .get(&p.src_mac)
            .cloned()
            .or_else(|| self.view.hosts.get(&p.src_ip).and_then(|h| h.user.clone()));
        FlowContext {
            flow_id: p.flow_key().to_string(),
            src_as: self.resolve(p.src_ip),
            dst_as: self.resolve(p.dst_ip),
            src_ip: p.src_ip,
            dst_ip: p.dst_ip,
            src_mac: p.src_mac,
            dst_mac: p.dst_mac,
            user,
            service_port: p.service_port(),
            packet_type: p.kind.clone(),
            timestamp: pi.tick,
            traversed_path: traversed,
            ingress_switch: Some(pi.switch.clone()),
            signature: p.signature.clone(),
        }
    }

    pub fn handle_packet_in(&mut self, pi: &PacketIn) -> PacketInResult {
        let p = &pi.packet;
        let key = p.flow_key();
        let flow_id = key.to_string();
        let cost = self.config.cost;
        let mut w = Work {
            cost: cost.base,
            event: ControllerEvent {
                arrival: pi.tick,
                finish: pi.tick,
                latency: 0,
                service: 0,
                domain: self.desc.id.clone(),
                switch: pi.switch.clone(),
                in_port: pi.in_port,
                packet_id: p.id,
                flow: flow_id.clone(),
                traversed: Vec::new(),
                matched_pe: None,
                verdict: String::new(),
                reason: None,
                detail: String::new(),
                path: Vec::new(),
                next_as: None,
                rules: 0,
            },
        };

        if p.kind == PacketKind::Arp {
            w.event.verdict = "answered".into();
            return w.finish(Outcome::Answered);
        }

        // Defense screens requests from directly attached hosts.
        let from_host = self.view.host_at(&pi.switch, pi.in_port).is_some();
        if self.config.pbsa && self.config.defense && from_host {
            w.cost += cost.defense;
            let host = HostKey {
                switch: pi.switch.clone(),
                port: pi.in_port,
            };
            match self.monitor.observe(&host, pi.tick) {
                Verdict::Ok => {}
                Verdict::Throttle => return w.drop(DropReason::Defense, format!("throttled {host}")),
                Verdict::DropRule { install } => {
                    let block = install.then(|| FlowModBatch {
                        provenance: "defense".into(),
                        mods: vec![(pi.switch.clone(), FlowRule::block_port(pi.in_port))],
                    });
                    w.event.rules = block.as_ref().map_or(0, FlowModBatch::len);
                    let mut r = w.drop(DropReason::Defense, format!("blocked {host}"));
                    r.outcome = Outcome::Drop {
                        reason: DropReason::Defense,
                        block,
                    };
                    return r;
                }
            }
        }

        // Handle and token from the upstream domain.
        let from_gateway = self.view.gateway_at(&pi.switch, pi.in_port).is_some();
        let mut received: Option<PolicyTransferToken> = None;
        let mut upstream: Option<Handle> = None;
        if self.config.pbsa && from_gateway {
            w.cost += cost.handle;
            let Some(aug) = &p.augmentation else {
                return w.drop(DropReason::Tamper, "inter-domain packet without handle");
            };
            if let Err(e) = aug.handle.validate(&self.keys, |a| self.topo.is_neighbor(a), &flow_id) {
                return w.drop(DropReason::Tamper, e.to_string());
            }
            let issuer = aug.handle.visited.last().expect("validated");
            match &aug.ptt {
                Some(t) if t.verify(&self.keys, issuer, &flow_id) => received = Some(t.clone()),
                Some(_) => self.security_log.push(SecurityEvent {
                    tick: pi.tick,
                    domain: self.desc.id.clone(),
                    flow: flow_id.clone(),
                    detail: "policy transfer token rejected".into(),
                }),
                None => {}
            }
            upstream = Some(aug.handle.clone());
        }
        let traversed = upstream.as_ref().map(|h| h.visited.clone()).unwrap_or_default();
        w.event.traversed = traversed.clone();
        let ctx = self.context(pi, traversed.clone());

        let (decision, tags, origin) = if self.config.pbsa {
            w.cost += cost.per_pe * self.policies.len() as u64;
            let d = select_policy(&self.policies, &ctx);
            let tags = d
                .matched_pe
                .as_ref()
                .and_then(|id| self.policies.iter().find(|pe| &pe.id == id))
                .and_then(|pe| pe.sec_profile)
                .unwrap_or_default();
            let origin = RuleOrigin::Policy(d.matched_pe.clone().unwrap_or_default());
            (d, tags, origin)
        } else {
            let mut d = Decision::deny(None);
            d.verdict = Action::Allow;
            (d, SecProfile::default(), RuleOrigin::Baseline)
        };
        w.event.matched_pe = decision.matched_pe.clone();
        if !decision.is_allow() {
            let why = match &decision.matched_pe {
                Some(id) => format!("denied by {id}"),
                None => "no matching permit".to_string(),
            };
            return w.drop(DropReason::Policy, why);
        }

        // Combine local obligations with what upstream delegated.
        let delegated = received.as_ref().map_or(&[][..], |t| &t.constraints[..]);
        let merged = match merge_constraints(&decision.ptt_constraints, delegated) {
            Ok(m) => m,
            Err(e) => return w.drop(DropReason::Policy, e.to_string()),
        };
        let bounds = decision
            .label_obligation
            .unwrap_or(LabelBounds::ANY)
            .intersect(&merged.bounds);
        if !bounds.is_satisfiable() {
            return w.drop(DropReason::Policy, format!("label obligation {bounds} is empty"));
        }
        if received.is_some() && !merged.bounds.floor().satisfies(self.desc.label) {
            return w.drop(
                DropReason::Policy,
                format!("domain label {} below delegated {}", self.desc.label, merged.bounds),
            );
        }
        if self.config.pbsa {
            let rate_key = decision.matched_pe.clone().unwrap_or_default();
            let rates = merged.constraints.iter().chain(
                decision
                    .matched_pe
                    .as_ref()
                    .and_then(|id| self.policies.iter().find(|pe| &pe.id == id))
                    .map(|pe| pe.dom_cons.as_slice())
                    .unwrap_or_default(),
            );
            let limits: Vec<u32> = rates
                .filter_map(|c| match c {
                    Constraint::RateThreshold(n) => Some(*n),
                    _ => None,
                })
                .collect();
            if let Some(limit) = limits.into_iter().min() {
                if !self.monitor.within_rate(&rate_key, limit, pi.tick) {
                    return w.drop(DropReason::Defense, format!("rate<={limit} exceeded"));
                }
            }
        }

        // Where the flow leaves this domain: the first candidate exit, in
        // AS-path then gateway order, that has an admissible switch path.
        let local_host = self.view.hosts.get(&p.dst_ip).cloned();
        let exits: Vec<(SwitchId, u32, Option<AsId>)> = if let Some(h) = local_host {
            vec![(h.switch, h.port, None)]
        } else if self.desc.subnet.contains(p.dst_ip) {
            return w.drop(DropReason::Unreachable, format!("no host {}", p.dst_ip));
        } else {
            let Some(dst) = ctx.dst_as.as_ref() else {
                return w.drop(DropReason::Unreachable, format!("{} not in topology", p.dst_ip));
            };
            let pin = decision.exit_obligation.as_ref();
            let mut exits = Vec::new();
            for path in find_as_paths(&self.as_map, &self.desc.id, &dst.id, bounds.floor()) {
                if path[1..].iter().any(|a| traversed.contains(a)) {
                    continue;
                }
                for g in self.view.gateways_to(&path[1]) {
                    let e = (g.switch.clone(), g.port, Some(path[1].clone()));
                    if pin.is_none_or(|s| &g.switch == s) && !exits.contains(&e) {
                        exits.push(e);
                    }
                }
            }
            if exits.is_empty() {
                return w.drop(
                    DropReason::NoPath,
                    format!("no next domain toward {} satisfies {}", dst.id, bounds.floor()),
                );
            }
            exits
        };

        w.cost += cost.per_switch * self.topo.intra.len() as u64;
        let mut last_err = None;
        let mut found = None;
        for (egress, port, next) in exits {
            match find_switch_path(
                &self.topo.intra,
                &pi.switch,
                &egress,
                decision.path_obligation.as_deref(),
                bounds,
            ) {
                Ok(path) => {
                    found = Some((path, port, next));
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        let Some((path, out_port, next_as)) = found else {
            let why = last_err.map_or_else(String::new, |e| e.to_string());
            return w.drop(DropReason::NoPath, why);
        };
        w.event.next_as = next_as.clone();
        let route = Route {
            path,
            in_port: pi.in_port,
            out_port,
        };
        let batch = synthesize_rules(&self.view, &route, &key, self.config.granularity, tags, origin);
        w.cost += cost.per_rule * batch.len() as u64;
        w.event.path = route.path;
        w.event.rules = batch.len();
        w.event.verdict = "allow".into();

        if self.config.pbsa && (next_as.is_some() || upstream.is_some()) {
            w.cost += cost.handle;
            let handle = match &upstream {
                Some(h) => h.extend(&self.keys),
                None => self.create_handle(&flow_id),
            };
            if next_as.is_some() {
                let ptt = PolicyTransferToken::issue(&self.keys, &flow_id, &handle.origin, &merged.constraints);
                self.outbound.insert(key, AugmentedHeader { handle, ptt });
            } else {
                self.accepted.insert(key, handle);
            }
        }
        w.finish(Outcome::Install(batch))
    }
}
