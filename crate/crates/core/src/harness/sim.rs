//! Deterministic discrete-event execution of a scenario.
//!
//! Events are ordered by (tick, insertion sequence). Each controller is a
//! single FIFO server: a packet_in is decided when it arrives and the
//! resulting flow_mods leave when its service time has elapsed.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics::{DomainCrossing, FlowRecord, InstallRecord, MetricsReport, PacketRecord, SwitchStats};
use super::scenario::{LinkSpec, LoadError, Mode, Mutation, Scenario, TamperSpec};
use crate::controller::{
    Controller, ControllerConfig, ControllerEvent, DomainView, DropReason, GatewayLink, HostAttachment,
    Outcome, PacketIn,
};
use crate::dataplane::{FlowRule, ForwardOutcome, MissPolicy, Packet, PortPeer, Switch};
use crate::defense::{CapacityModel, FloodDetector, FloodMonitor, HistoryConfig, Response};
use crate::ids::{AsId, HostId, SwitchId};
use crate::interdomain::KeyRing;
use crate::policy::{AsDescriptor, MacAddr};
use crate::topology::{probe_topology, AsGraph, AsMap, IntraGraph};

#[derive(Debug, Clone)]
enum Event {
    Send(Packet, HostId),
    Arrive { switch: SwitchId, in_port: u32, packet: Packet },
    ToController { domain: AsId, pi: PacketIn },
    Decided { domain: AsId, pi: PacketIn, outcome: Outcome },
    HostReceive { host: HostId, packet: Packet },
    LinkDown { a: SwitchId, b: SwitchId },
}

#[derive(Debug, Clone)]
struct Track {
    flow: String,
    label: Option<String>,
    src: HostId,
    dst: Ipv4Addr,
    sent: u64,
    switches: Vec<SwitchId>,
    domains: Vec<AsId>,
    fate: Option<(u64, Result<(), DropReason>, Option<AsId>)>,
    reply: bool,
}

#[derive(Debug, Clone)]
struct HostInfo {
    attach: HostAttachment,
    domain: AsId,
}

pub struct Sim {
    scenario: Scenario,
    variant: String,
    switches: BTreeMap<SwitchId, Switch>,
    hosts: BTreeMap<HostId, HostInfo>,
    host_by_ip: BTreeMap<Ipv4Addr, HostId>,
    controllers: BTreeMap<AsId, Controller>,
    busy: BTreeMap<AsId, u64>,
    queue: BTreeMap<(u64, u64), Event>,
    seq: u64,
    next_packet: u64,
    tracks: BTreeMap<u64, Track>,
    events: Vec<ControllerEvent>,
    installs: Vec<InstallRecord>,
    rules_installed: BTreeMap<AsId, u64>,
    now: u64,
}

/// Ports chosen for every link and host, explicit ones first.
struct PortPlan {
    next: BTreeMap<SwitchId, u32>,
    used: BTreeMap<SwitchId, BTreeSet<u32>>,
}

impl PortPlan {
    fn new(s: &Scenario) -> Self {
        let mut used: BTreeMap<SwitchId, BTreeSet<u32>> = BTreeMap::new();
        let links = s.domains.iter().flat_map(|d| &d.links).chain(&s.interdomain_links);
        for l in links {
            if let Some(p) = l.a_port {
                used.entry(l.a.clone()).or_default().insert(p);
            }
            if let Some(p) = l.b_port {
                used.entry(l.b.clone()).or_default().insert(p);
            }
        }
        for h in s.domains.iter().flat_map(|d| &d.hosts) {
            if let Some(p) = h.port {
                used.entry(h.switch.clone()).or_default().insert(p);
            }
        }
        Self {
            next: BTreeMap::new(),
            used,
        }
    }

    fn take(&mut self, s: &SwitchId, explicit: Option<u32>) -> u32 {
        if let Some(p) = explicit {
            return p;
        }
        let used = self.used.entry(s.clone()).or_default();
        let n = self.next.entry(s.clone()).or_insert(1);
        while used.contains(n) {
            *n += 1;
        }
        let p = *n;
        used.insert(p);
        p
    }
}

fn connect(
    switches: &mut BTreeMap<SwitchId, Switch>,
    plan: &mut PortPlan,
    l: &LinkSpec,
) -> Result<(u32, u32), LoadError> {
    let pa = plan.take(&l.a, l.a_port);
    let pb = plan.take(&l.b, l.b_port);
    for (s, p, peer, peer_port) in [(&l.a, pa, &l.b, pb), (&l.b, pb, &l.a, pa)] {
        let sw = switches.get_mut(s).expect("validated");
        let prev = sw.ports.insert(
            p,
            PortPeer::Switch {
                id: peer.clone(),
                port: peer_port,
            },
        );
        if prev.is_some() {
            return Err(LoadError::Invalid(format!("port {p} of {s} used twice")));
        }
    }
    Ok((pa, pb))
}

impl Sim {
    pub fn new(scenario: &Scenario) -> Result<Sim, LoadError> {
        let s = scenario;
        let mut switches = BTreeMap::new();
        let mut owner: BTreeMap<SwitchId, AsId> = BTreeMap::new();
        for d in &s.domains {
            for sw in &d.switches {
                let mut x = Switch::new(sw.id.clone(), d.id.clone(), sw.label);
                x.capacity = s.table_capacity;
                switches.insert(sw.id.clone(), x);
                owner.insert(sw.id.clone(), d.id.clone());
            }
        }
        let mut plan = PortPlan::new(s);
        let mut views: BTreeMap<AsId, DomainView> = BTreeMap::new();
        let mut intras: BTreeMap<AsId, IntraGraph> = BTreeMap::new();
        let mut hosts = BTreeMap::new();
        let mut host_by_ip = BTreeMap::new();
        let mut mac_seq = 1u32;
        for d in &s.domains {
            let view = views.entry(d.id.clone()).or_default();
            let intra = intras.entry(d.id.clone()).or_default();
            for sw in &d.switches {
                intra.add_switch(sw.id.clone(), sw.label);
            }
            for l in &d.links {
                let (pa, pb) = connect(&mut switches, &mut plan, l)?;
                intra.link(&l.a, &l.b);
                view.ports.entry(l.a.clone()).or_default().insert(l.b.clone(), pa);
                view.ports.entry(l.b.clone()).or_default().insert(l.a.clone(), pb);
            }
            for h in &d.hosts {
                let port = plan.take(&h.switch, h.port);
                let sw = switches.get_mut(&h.switch).expect("validated");
                if sw.ports.insert(port, PortPeer::Host(h.id.clone())).is_some() {
                    return Err(LoadError::Invalid(format!("port {port} of {} used twice", h.switch)));
                }
                let mac = h.mac.unwrap_or_else(|| {
                    mac_seq += 1;
                    MacAddr::synthetic(mac_seq - 1)
                });
                let attach = HostAttachment {
                    id: h.id.clone(),
                    ip: h.ip,
                    mac,
                    switch: h.switch.clone(),
                    port,
                    user: h.user.clone(),
                };
                if host_by_ip.insert(h.ip, h.id.clone()).is_some() {
                    return Err(LoadError::Invalid(format!("address {} assigned twice", h.ip)));
                }
                view.hosts.insert(h.ip, attach.clone());
                if let Some(u) = &h.user {
                    view.users.insert(mac, u.clone());
                }
                hosts.insert(
                    h.id.clone(),
                    HostInfo {
                        attach,
                        domain: d.id.clone(),
                    },
                );
            }
            for (mac, user) in &d.users {
                view.users.insert(*mac, user.clone());
            }
        }

        let mut graph = AsGraph::default();
        for d in &s.domains {
            graph.add_domain(AsDescriptor {
                id: d.id.clone(),
                subnet: d.subnet,
                as_type: d.as_type.clone(),
                label: d.label,
            });
        }
        for l in &s.interdomain_links {
            let (pa, pb) = connect(&mut switches, &mut plan, l)?;
            let (da, db) = (owner[&l.a].clone(), owner[&l.b].clone());
            graph.link(&da, &db);
            for (dom, sw, port, peer_as, peer_sw) in [(&da, &l.a, pa, &db, &l.b), (&db, &l.b, pb, &da, &l.a)] {
                views.get_mut(dom).expect("domain").gateways.push(GatewayLink {
                    switch: sw.clone(),
                    port,
                    peer_as: peer_as.clone(),
                    peer_switch: peer_sw.clone(),
                });
            }
        }
        for v in views.values_mut() {
            v.gateways
                .sort_by(|a, b| (&a.peer_as, &a.switch, a.port).cmp(&(&b.peer_as, &b.switch, b.port)));
        }

        let max_ttl = s.domains.len() as u32;
        let repos: BTreeMap<AsId, _> = s
            .domains
            .iter()
            .map(|d| {
                let intra = intras.remove(&d.id).unwrap_or_default();
                let repo = probe_topology(&graph, &d.id, max_ttl, intra).expect("domain in graph");
                (d.id.clone(), repo)
            })
            .collect();
        let as_map = AsMap::from_repositories(repos.values());

        let defense = s.defense.clone();
        let mut controllers = BTreeMap::new();
        for d in &s.domains {
            let mut keys = KeyRing::new(d.id.clone(), d.key());
            for n in graph.neighbors(&d.id) {
                let peer = s.domain(n.as_str()).expect("validated");
                keys.add_peer(n.clone(), peer.key());
            }
            let (cap, window, history, response, instances) = match &defense {
                Some(def) => (def.capacity, def.window, def.history, def.response, def.instances),
                None => (
                    CapacityModel {
                        cc: u64::from(u32::MAX),
                        x: 1,
                        y: 1,
                        cs: None,
                    },
                    super::scenario::TICKS_PER_SECOND,
                    HistoryConfig::default(),
                    Response::None,
                    1,
                ),
            };
            let mut monitor = FloodMonitor::new(cap, window, history, response)?;
            if instances > 1 {
                monitor.rescale(instances, history)?;
            }
            let repo = repos[&d.id].clone();
            controllers.insert(
                d.id.clone(),
                Controller {
                    desc: repo.owner.clone(),
                    policies: d.resolved.clone(),
                    topo: repo,
                    as_map: as_map.clone(),
                    view: views.remove(&d.id).unwrap_or_default(),
                    keys,
                    monitor: Box::new(monitor),
                    config: ControllerConfig {
                        pbsa: s.pbsa,
                        defense: defense.is_some(),
                        granularity: s.granularity,
                        cost: s.cost,
                    },
                    outbound: BTreeMap::new(),
                    accepted: BTreeMap::new(),
                    security_log: Vec::new(),
                },
            );
        }
        for sw in switches.values_mut() {
            sw.install(FlowRule::arp_discovery()).expect("empty table");
        }

        Ok(Sim {
            scenario: s.clone(),
            variant: "default".into(),
            switches,
            hosts,
            host_by_ip,
            busy: BTreeMap::new(),
            controllers,
            queue: BTreeMap::new(),
            seq: 0,
            next_packet: 0,
            tracks: BTreeMap::new(),
            events: Vec::new(),
            installs: Vec::new(),
            rules_installed: BTreeMap::new(),
            now: 0,
        })
    }

    /// Name reported as the run's variant.
    pub fn with_variant_name(mut self, name: &str) -> Self {
        self.variant = name.to_string();
        self
    }

    pub fn switch(&self, id: &str) -> Option<&Switch> {
        self.switches.get(&SwitchId::from(id))
    }

    pub fn controller(&self, id: &str) -> Option<&Controller> {
        self.controllers.get(&AsId::from(id))
    }

    fn push(&mut self, tick: u64, e: Event) {
        self.queue.insert((tick, self.seq), e);
        self.seq += 1;
    }

    /// Packets of the traffic program, in send order.
    fn program(&self) -> Vec<(u64, Packet, HostId, Option<String>, bool)> {
        let s = &self.scenario;
        let mut out = Vec::new();
        for (idx, t) in s.traffic.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ idx as u64);
            let src = &self.hosts[&t.src].attach;
            let dst_ip = self
                .hosts
                .get(&HostId::from(t.dst.as_str()))
                .map(|h| h.attach.ip)
                .unwrap_or_else(|| crate::policy::parse_ipv4(&t.dst).expect("validated"));
            let dst_mac = self.host_by_ip.get(&dst_ip).map(|h| self.hosts[h].attach.mac);
            let period = t.period();
            let port_base: u32 = rng.gen_range(0..16_384);
            let fixed_sport = t.sport.unwrap_or(40_000 + (idx as u16 % 20_000));
            for i in 0..t.packet_count() {
                let jitter = if t.jitter { rng.gen_range(0..period) } else { 0 };
                let tick = t.start + t.offset(i) + jitter;
                let sport = if t.new_connection {
                    (1024 + (port_base as u64 + i) % 64_000) as u16
                } else {
                    fixed_sport
                };
                let p = Packet {
                    id: 0,
                    src_ip: src.ip,
                    dst_ip,
                    src_mac: src.mac,
                    dst_mac,
                    kind: t.kind.clone(),
                    tp_src: sport,
                    tp_dst: t.service_port(),
                    size: t.size,
                    timestamp: tick,
                    signature: t.signature.clone(),
                    augmentation: None,
                };
                out.push((tick, p, t.src.clone(), t.label.clone(), t.reply));
            }
        }
        out.sort_by_key(|(tick, ..)| *tick);
        out
    }

    fn enqueue_program(&mut self) {
        for (tick, mut p, host, label, reply) in self.program() {
            p.id = self.next_packet;
            self.next_packet += 1;
            self.tracks.insert(
                p.id,
                Track {
                    flow: p.flow_key().to_string(),
                    label,
                    src: host.clone(),
                    dst: p.dst_ip,
                    sent: tick,
                    reply,
                    switches: Vec::new(),
                    domains: Vec::new(),
                    fate: None,
                },
            );
            self.push(tick, Event::Send(p, host));
        }
        let faults: Vec<_> = self.scenario.faults.clone();
        for f in faults {
            self.push(f.at, Event::LinkDown { a: f.a, b: f.b });
        }
    }

    fn settle(&mut self, id: u64, result: Result<(), DropReason>, at: Option<AsId>) {
        let now = self.now;
        if let Some(t) = self.tracks.get_mut(&id) {
            if t.fate.is_none() {
                t.fate = Some((now, result, at));
            }
        }
    }

    fn owner(&self, s: &SwitchId) -> AsId {
        self.switches[s].owner.clone()
    }

    fn run_queue(&mut self) {
        let horizon = self.scenario.horizon;
        while let Some(((tick, _), e)) = self.queue.pop_first() {
            if horizon.is_some_and(|h| tick > h) {
                self.queue.clear();
                break;
            }
            self.now = tick;
            self.step(e);
        }
        let ids: Vec<u64> = self.tracks.iter().filter(|(_, t)| t.fate.is_none()).map(|(id, _)| *id).collect();
        for id in ids {
            self.settle(id, Err(DropReason::Expired), None);
        }
    }

    fn step(&mut self, e: Event) {
        let link = self.scenario.timing.link;
        let channel = self.scenario.timing.channel;
        match e {
            Event::Send(p, host) => {
                let h = &self.hosts[&host].attach;
                let (switch, in_port) = (h.switch.clone(), h.port);
                self.push(self.now + link, Event::Arrive { switch, in_port, packet: p });
            }
            Event::Arrive { switch, in_port, packet } => {
                let owner = self.owner(&switch);
                if let Some(t) = self.tracks.get_mut(&packet.id) {
                    t.switches.push(switch.clone());
                    if t.domains.last() != Some(&owner) {
                        t.domains.push(owner.clone());
                    }
                }
                let copy = packet.clone();
                let out = self.switches.get_mut(&switch).expect("known").process_packet(packet, in_port);
                self.apply_outcome(&switch, in_port, copy, out);
            }
            Event::ToController { domain, pi } => {
                let ctrl = self.controllers.get_mut(&domain).expect("known");
                let mut r = ctrl.handle_packet_in(&pi);
                let busy = self.busy.entry(domain.clone()).or_insert(0);
                let start = (*busy).max(self.now);
                let finish = start + r.event.service;
                *busy = finish;
                r.event.arrival = self.now;
                r.event.finish = finish;
                r.event.latency = finish - self.now;
                self.events.push(r.event);
                self.push(
                    finish + channel,
                    Event::Decided {
                        domain,
                        pi,
                        outcome: r.outcome,
                    },
                );
            }
            Event::Decided { domain, pi, outcome } => self.apply_decision(domain, pi, outcome),
            Event::HostReceive { host, packet } => {
                let info = &self.hosts[&host];
                let domain = info.domain.clone();
                if info.attach.ip != packet.dst_ip {
                    self.settle(packet.id, Err(DropReason::Unreachable), Some(domain));
                    return;
                }
                self.settle(packet.id, Ok(()), None);
                let reply = self.tracks.get(&packet.id).is_some_and(|t| t.reply);
                if reply {
                    self.send_reply(&host, &packet);
                }
            }
            Event::LinkDown { a, b } => {
                for (x, y) in [(&a, &b), (&b, &a)] {
                    if let Some(sw) = self.switches.get_mut(x) {
                        if let Some(p) = sw.port_to_switch(y) {
                            sw.down_ports.insert(p);
                        }
                    }
                }
            }
        }
    }

    fn send_reply(&mut self, host: &HostId, req: &Packet) {
        let Some(src) = self.host_by_ip.get(&req.src_ip) else { return };
        let p = Packet {
            id: self.next_packet,
            src_ip: req.dst_ip,
            dst_ip: req.src_ip,
            src_mac: self.hosts[host].attach.mac,
            dst_mac: Some(self.hosts[src].attach.mac),
            kind: req.kind.clone(),
            tp_src: req.tp_dst,
            tp_dst: req.tp_src,
            size: req.size,
            timestamp: self.now + 1,
            signature: None,
            augmentation: None,
        };
        self.next_packet += 1;
        let label = self.tracks.get(&req.id).and_then(|t| t.label.clone()).map(|l| format!("{l}/reply"));
        self.tracks.insert(
            p.id,
            Track {
                flow: p.flow_key().to_string(),
                label,
                src: host.clone(),
                dst: p.dst_ip,
                sent: self.now + 1,
                switches: Vec::new(),
                domains: Vec::new(),
                fate: None,
                reply: false,
            },
        );
        self.push(self.now + 1, Event::Send(p, host.clone()));
    }

    fn apply_outcome(&mut self, switch: &SwitchId, in_port: u32, packet: Packet, out: ForwardOutcome) {
        let owner = self.owner(switch);
        let link = self.scenario.timing.link;
        match out {
            ForwardOutcome::Forward { peer, .. } => match peer {
                PortPeer::Host(h) => self.push(self.now + link, Event::HostReceive { host: h, packet }),
                PortPeer::Switch { id, port } => {
                    let mut packet = packet;
                    let peer_owner = self.owner(&id);
                    if peer_owner != owner {
                        packet.augmentation = self
                            .controllers
                            .get(&owner)
                            .and_then(|c| c.outbound.get(&packet.flow_key()))
                            .cloned();
                        self.tamper(switch, &id, &mut packet);
                    }
                    self.push(self.now + link, Event::Arrive { switch: id, in_port: port, packet });
                }
            },
            ForwardOutcome::Dropped(origin) => {
                let reason = if origin == crate::dataplane::RuleOrigin::Defense {
                    DropReason::Defense
                } else {
                    DropReason::Policy
                };
                self.settle(packet.id, Err(reason), Some(owner));
            }
            ForwardOutcome::PacketIn { evicted } => {
                if let Some(old) = evicted {
                    self.settle(old.id, Err(DropReason::BufferEvicted), Some(owner.clone()));
                }
                let pi = PacketIn {
                    switch: switch.clone(),
                    in_port,
                    packet,
                    tick: 0,
                };
                let at = self.now + self.scenario.timing.channel;
                let mut pi = pi;
                pi.tick = at;
                self.push(at, Event::ToController { domain: owner, pi });
            }
            ForwardOutcome::MissDropped => self.settle(packet.id, Err(DropReason::TableMiss), Some(owner)),
            ForwardOutcome::LinkDown { .. } => self.settle(packet.id, Err(DropReason::LinkDown), Some(owner)),
        }
    }

    fn tamper(&self, from: &SwitchId, to: &SwitchId, packet: &mut Packet) {
        let rules: Vec<&TamperSpec> = self.scenario.tamper.iter().filter(|t| &t.from == from && &t.to == to).collect();
        for t in rules {
            apply_mutation(&t.mutation, packet);
        }
    }

    fn apply_decision(&mut self, domain: AsId, pi: PacketIn, outcome: Outcome) {
        let key = pi.packet.flow_key();
        let src_host = self.host_by_ip.get(&pi.packet.src_ip).cloned();
        match outcome {
            Outcome::Install(batch) => {
                let mut released = Vec::new();
                let mut full = false;
                let mut count = 0u64;
                for (sw, rule) in &batch.mods {
                    match self.switches.get_mut(sw).expect("route switch").install(rule.clone()) {
                        Ok(r) => {
                            count += 1;
                            released.extend(r.into_iter().map(|(p, o)| (sw.clone(), p, o)));
                        }
                        Err(_) => full = true,
                    }
                }
                *self.rules_installed.entry(domain.clone()).or_default() += count;
                self.installs.push(InstallRecord {
                    tick: self.now,
                    domain: domain.clone(),
                    switch: pi.switch.clone(),
                    in_port: pi.in_port,
                    src_ip: pi.packet.src_ip,
                    src_host,
                    flow: key.to_string(),
                    provenance: batch.provenance.clone(),
                    rules: count as usize,
                    defense: false,
                });
                for (sw, p, o) in released {
                    let port = 0;
                    self.apply_outcome(&sw, port, p, o);
                }
                if full {
                    if let Some(p) = self.switches.get_mut(&pi.switch).and_then(|s| s.discard_buffered(&key)) {
                        self.settle(p.id, Err(DropReason::TableFull), Some(domain));
                    }
                }
            }
            Outcome::Drop { reason, block } => {
                if let Some(batch) = block {
                    let mut count = 0;
                    for (sw, rule) in &batch.mods {
                        if self.switches.get_mut(sw).expect("switch").install(rule.clone()).is_ok() {
                            count += 1;
                        }
                    }
                    *self.rules_installed.entry(domain.clone()).or_default() += count as u64;
                    self.installs.push(InstallRecord {
                        tick: self.now,
                        domain: domain.clone(),
                        switch: pi.switch.clone(),
                        in_port: pi.in_port,
                        src_ip: pi.packet.src_ip,
                        src_host,
                        flow: key.to_string(),
                        provenance: batch.provenance,
                        rules: count,
                        defense: true,
                    });
                }
                if let Some(p) = self.switches.get_mut(&pi.switch).and_then(|s| s.discard_buffered(&key)) {
                    self.settle(p.id, Err(reason), Some(domain));
                }
            }
            Outcome::Answered => {
                if let Some(p) = self.switches.get_mut(&pi.switch).and_then(|s| s.discard_buffered(&key)) {
                    self.settle(p.id, Ok(()), None);
                } else {
                    self.settle(pi.packet.id, Ok(()), None);
                }
            }
        }
    }

    fn reset_for_replay(&mut self) {
        for sw in self.switches.values_mut() {
            sw.reset_counters();
            sw.miss_policy = MissPolicy::Drop;
            sw.down_ports.clear();
        }
        self.tracks.clear();
        self.events.clear();
        self.installs.clear();
        self.rules_installed.clear();
        self.busy.clear();
        self.queue.clear();
        self.next_packet = 0;
        self.seq = 0;
        self.now = 0;
    }

    /// Runs the traffic program to completion and reports.
    pub fn run(&mut self) -> MetricsReport {
        if self.scenario.mode == Mode::Proactive {
            self.enqueue_program();
            self.run_queue();
            self.reset_for_replay();
        }
        self.enqueue_program();
        self.run_queue();
        self.report()
    }

    fn report(&self) -> MetricsReport {
        let s = &self.scenario;
        let mut packets = Vec::new();
        let mut drops: BTreeMap<DropReason, u64> = BTreeMap::new();
        let mut delivered = 0;
        for (id, t) in &self.tracks {
            let (tick, result, at) = t.fate.clone().expect("settled");
            match result {
                Ok(()) => delivered += 1,
                Err(r) => *drops.entry(r).or_default() += 1,
            }
            packets.push(PacketRecord {
                id: *id,
                flow: t.flow.clone(),
                label: t.label.clone(),
                src: t.src.clone(),
                dst: t.dst,
                sent: t.sent,
                done: tick,
                outcome: result.err(),
                dropped_at: at,
                switch_path: t.switches.clone(),
                as_path: t.domains.clone(),
            });
        }
        let mut flows: BTreeMap<&str, FlowRecord> = BTreeMap::new();
        for p in &packets {
            let f = flows.entry(&p.flow).or_insert_with(|| FlowRecord {
                flow: p.flow.clone(),
                label: p.label.clone(),
                src: p.src.clone(),
                dst: p.dst,
                first_sent: p.sent,
                packets: 0,
                delivered: 0,
                established: None,
                establishment_ticks: None,
                switch_path: Vec::new(),
                as_path: Vec::new(),
                handle_visited: None,
                outcome: p.outcome,
            });
            f.packets += 1;
            f.first_sent = f.first_sent.min(p.sent);
            if p.outcome.is_none() {
                f.delivered += 1;
                if f.established.is_none_or(|e| p.done < e) {
                    f.established = Some(p.done);
                    f.switch_path = p.switch_path.clone();
                    f.as_path = p.as_path.clone();
                }
                f.outcome = None;
            }
        }
        let mut flows: Vec<FlowRecord> = flows.into_values().collect();
        for f in &mut flows {
            f.establishment_ticks = f.established.map(|e| e - f.first_sent);
            if let Some(last) = f.as_path.last() {
                let visited = self.controllers.get(last).and_then(|c| {
                    c.accepted
                        .iter()
                        .find(|(k, _)| k.to_string() == f.flow)
                        .map(|(_, h)| h.visited.clone())
                });
                f.handle_visited = visited;
            }
        }
        let crossings = self
            .controllers
            .iter()
            .flat_map(|(id, c)| {
                c.monitor.crossings().iter().map(move |x| DomainCrossing {
                    domain: id.clone(),
                    crossing: x.clone(),
                })
            })
            .collect();
        let security = self.controllers.values().flat_map(|c| c.security_log.iter().cloned()).collect();
        let switch_stats = self
            .switches
            .iter()
            .map(|(id, sw)| {
                (
                    id.clone(),
                    SwitchStats {
                        domain: sw.owner.clone(),
                        offered: sw.counters.offered,
                        packet_ins: sw.counters.packet_ins,
                        drops: sw.counters.drops,
                        evictions: sw.counters.evictions,
                        rule_packets: sw.rule_packets(),
                        rules: sw.rule_count(),
                    },
                )
            })
            .collect();
        MetricsReport {
            scenario: s.name.clone(),
            variant: self.variant.clone(),
            mode: s.mode,
            pbsa: s.pbsa,
            seed: s.seed,
            offered: self.tracks.len() as u64,
            delivered,
            drops,
            packets,
            flows,
            packet_ins: self.events.clone(),
            installs: self.installs.clone(),
            crossings,
            security,
            rules_installed: self
                .controllers
                .keys()
                .map(|d| (d.clone(), self.rules_installed.get(d).copied().unwrap_or(0)))
                .collect(),
            switches: switch_stats,
            end_tick: self.now,
        }
    }
}

/// Applies one tamper mutation to a packet's augmentation.
pub fn apply_mutation(m: &Mutation, packet: &mut Packet) {
    if matches!(m, Mutation::StripHandle) {
        packet.augmentation = None;
        return;
    }
    let Some(aug) = packet.augmentation.as_mut() else { return };
    let h = &mut aug.handle;
    match m {
        Mutation::FlipTagBit { bit } => {
            let b = bit % (h.tag.len() * 8);
            h.tag[b / 8] ^= 1 << (b % 8);
        }
        Mutation::ReverseVisited => h.visited.reverse(),
        Mutation::DropFirstVisited => {
            if !h.visited.is_empty() {
                h.visited.remove(0);
            }
        }
        Mutation::AppendVisited { domain } => h.visited.push(domain.clone()),
        Mutation::FlowId { value } => h.flow_id = value.clone(),
        Mutation::Origin { domain } => h.origin = domain.clone(),
        Mutation::ClearPttConstraints => {
            if let Some(t) = aug.ptt.as_mut() {
                t.constraints.clear();
            }
        }
        Mutation::StripHandle => unreachable!(),
    }
}

/// Runs a resolved scenario once, as is.
pub fn run(scenario: &Scenario) -> Result<MetricsReport, LoadError> {
    Ok(Sim::new(scenario)?.run())
}

/// Runs every variant of `scenario`, in declaration order.
pub fn run_variants(scenario: &Scenario) -> Result<Vec<MetricsReport>, LoadError> {
    scenario
        .variant_list()
        .into_iter()
        .map(|v| {
            Ok(Sim::new(&scenario.with_variant(&v))?.with_variant_name(&v.name).run())
        })
        .collect()
}
