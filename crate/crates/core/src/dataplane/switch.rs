use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::flow::{FlowAction, FlowMatch, FlowRule};
use super::packet::{FlowKey, Packet};
use crate::ids::{AsId, HostId, SwitchId};
use crate::policy::{Proto, SecurityLabel};

pub const DEFAULT_TABLE_CAPACITY: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DataplaneError {
    #[error("flow table of {switch} is full ({capacity} entries)")]
    TableFull { switch: SwitchId, capacity: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PortPeer {
    Switch { id: SwitchId, port: u32 },
    Host(HostId),
}

/// What to do on a table miss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MissPolicy {
    Controller,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForwardOutcome {
    Forward { port: u32, peer: PortPeer },
    /// Consumed by a drop rule; carries the rule's origin.
    Dropped(super::flow::RuleOrigin),
    /// Table miss or explicit punt. `evicted` is an older buffered packet
    /// of the same flow that was displaced.
    PacketIn { evicted: Option<Packet> },
    /// Table miss with misses configured to drop.
    MissDropped,
    LinkDown { port: u32 },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchCounters {
    pub offered: u64,
    pub packet_ins: u64,
    pub drops: u64,
    pub evictions: u64,
}

/// Table position: higher priority first, then installation order.
type Slot = (Reverse<u32>, u64);

#[derive(Debug, Clone)]
pub struct Switch {
    pub id: SwitchId,
    pub owner: AsId,
    pub label: SecurityLabel,
    pub ports: BTreeMap<u32, PortPeer>,
    pub down_ports: BTreeSet<u32>,
    pub miss_policy: MissPolicy,
    pub capacity: usize,
    pub counters: SwitchCounters,
    table: BTreeMap<Slot, FlowRule>,
    /// Wildcard shape -> exact match -> slot. Matches are unique per table.
    index: BTreeMap<u16, HashMap<FlowMatch, Slot>>,
    next_seq: u64,
    buffer: BTreeMap<FlowKey, (Packet, u32)>,
}

impl Switch {
    pub fn new(id: SwitchId, owner: AsId, label: SecurityLabel) -> Self {
        Self {
            id,
            owner,
            label,
            ports: BTreeMap::new(),
            down_ports: BTreeSet::new(),
            miss_policy: MissPolicy::Controller,
            capacity: DEFAULT_TABLE_CAPACITY,
            counters: SwitchCounters::default(),
            table: BTreeMap::new(),
            index: BTreeMap::new(),
            next_seq: 0,
            buffer: BTreeMap::new(),
        }
    }

    pub fn port_to(&self, peer: &PortPeer) -> Option<u32> {
        self.ports.iter().find(|(_, p)| *p == peer).map(|(n, _)| *n)
    }

    pub fn port_to_switch(&self, id: &SwitchId) -> Option<u32> {
        self.ports
            .iter()
            .find(|(_, p)| matches!(p, PortPeer::Switch { id: s, .. } if s == id))
            .map(|(n, _)| *n)
    }

    fn lookup_slot(&self, p: &Packet, in_port: u32) -> Option<Slot> {
        self.index
            .iter()
            .filter_map(|(mask, rules)| {
                let key = FlowMatch::project(p, in_port, *mask)?;
                rules.get(&key).copied()
            })
            .min()
    }

    /// The rule that applies: highest priority, earliest installed.
    pub fn lookup(&self, p: &Packet, in_port: u32) -> Option<&FlowRule> {
        self.lookup_slot(p, in_port).map(|s| &self.table[&s])
    }

    fn port_usable(&self, port: u32) -> bool {
        self.ports.contains_key(&port) && !self.down_ports.contains(&port)
    }

    /// Outcome of a rule's action, without touching counters.
    fn outcome(&self, slot: Slot) -> ForwardOutcome {
        let r = &self.table[&slot];
        match r.action {
            FlowAction::Forward(port) => match self.ports.get(&port) {
                Some(peer) if !self.down_ports.contains(&port) => ForwardOutcome::Forward {
                    port,
                    peer: peer.clone(),
                },
                _ => ForwardOutcome::LinkDown { port },
            },
            FlowAction::Drop => ForwardOutcome::Dropped(r.origin.clone()),
            FlowAction::SendToController => ForwardOutcome::PacketIn { evicted: None },
        }
    }

    /// Runs one arriving packet through the table.
    pub fn process_packet(&mut self, p: Packet, in_port: u32) -> ForwardOutcome {
        self.counters.offered += 1;
        match self.lookup_slot(&p, in_port) {
            Some(slot) => {
                if let FlowAction::Forward(port) = self.table[&slot].action {
                    if !self.port_usable(port) {
                        self.counters.drops += 1;
                        return ForwardOutcome::LinkDown { port };
                    }
                }
                // A punting rule counts the packet; it is not buffered.
                let r = self.table.get_mut(&slot).expect("indexed");
                r.packets += 1;
                r.bytes += p.size as u64;
                self.outcome(slot)
            }
            None => match self.miss_policy {
                MissPolicy::Drop => {
                    self.counters.drops += 1;
                    ForwardOutcome::MissDropped
                }
                MissPolicy::Controller => {
                    self.counters.packet_ins += 1;
                    let evicted = self.buffer.insert(p.flow_key(), (p, in_port)).map(|(old, _)| old);
                    if evicted.is_some() {
                        self.counters.evictions += 1;
                    }
                    ForwardOutcome::PacketIn { evicted }
                }
            },
        }
    }

    /// Installs a rule. A rule with an identical match keeps a single entry
    /// at the higher priority. Returns buffered packets that now hit a
    /// rule, with the outcome of applying it; those packets are not counted
    /// again.
    pub fn install(&mut self, rule: FlowRule) -> Result<Vec<(Packet, ForwardOutcome)>, DataplaneError> {
        let mask = rule.matcher.mask();
        let existing = self.index.get(&mask).and_then(|m| m.get(&rule.matcher)).copied();
        match existing {
            Some(slot) => {
                let old = &self.table[&slot];
                if rule.priority < old.priority {
                    return Ok(Vec::new());
                }
                if old.priority == rule.priority && old.action == rule.action {
                    let old = self.table.get_mut(&slot).expect("indexed");
                    old.tags = rule.tags;
                    old.origin = rule.origin;
                    return Ok(self.release(&rule.matcher));
                }
                self.table.remove(&slot);
                self.insert_new(mask, rule.clone());
            }
            None => {
                if self.table.len() >= self.capacity {
                    return Err(DataplaneError::TableFull {
                        switch: self.id.clone(),
                        capacity: self.capacity,
                    });
                }
                self.insert_new(mask, rule.clone());
            }
        }
        Ok(self.release(&rule.matcher))
    }

    fn insert_new(&mut self, mask: u16, rule: FlowRule) {
        let slot = (Reverse(rule.priority), self.next_seq);
        self.next_seq += 1;
        self.index.entry(mask).or_default().insert(rule.matcher.clone(), slot);
        self.table.insert(slot, rule);
    }

    /// Buffered packets that `m` may now forward. Only the new rule can
    /// change a buffered packet's fate, so only packets it matches are
    /// looked up again.
    fn release(&mut self, m: &FlowMatch) -> Vec<(Packet, ForwardOutcome)> {
        let candidates: Vec<FlowKey> = match (m.proto, m.src_ip, m.dst_ip, m.tp_src, m.tp_dst) {
            (Some(proto), Some(src_ip), Some(dst_ip), Some(tp_src), Some(tp_dst)) => {
                let k = FlowKey { src_ip, dst_ip, proto, tp_src, tp_dst };
                self.buffer.contains_key(&k).then_some(k).into_iter().collect()
            }
            (_, Some(src_ip), Some(dst_ip), ..) => {
                let lo = FlowKey { src_ip, dst_ip, proto: Proto::Arp, tp_src: 0, tp_dst: 0 };
                let hi = FlowKey { src_ip, dst_ip, proto: Proto::Udp, tp_src: u16::MAX, tp_dst: u16::MAX };
                self.buffer.range(lo..=hi).map(|(k, _)| k.clone()).collect()
            }
            _ => self.buffer.keys().cloned().collect(),
        };
        let mut out = Vec::new();
        for k in candidates {
            let (p, port) = &self.buffer[&k];
            if !m.matches(p, *port) {
                continue;
            }
            let Some(slot) = self.lookup_slot(p, *port) else { continue };
            if self.table[&slot].action == FlowAction::SendToController {
                continue;
            }
            let (p, _) = self.buffer.remove(&k).expect("present");
            out.push((p, self.outcome(slot)));
        }
        out
    }

    /// Drops the buffered packet of a flow, if any.
    pub fn discard_buffered(&mut self, key: &FlowKey) -> Option<Packet> {
        self.buffer.remove(key).map(|(p, _)| p)
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    /// Rules in table order.
    pub fn flow_dump(&self) -> impl Iterator<Item = &FlowRule> {
        self.table.values()
    }

    pub fn rule_count(&self) -> usize {
        self.table.len()
    }

    pub fn render_dump(&self) -> String {
        self.table.values().map(|r| format!("{r}\n")).collect()
    }

    /// Zeroes switch and rule counters, keeping the table.
    pub fn reset_counters(&mut self) {
        self.counters = SwitchCounters::default();
        for r in self.table.values_mut() {
            r.packets = 0;
            r.bytes = 0;
        }
    }

    pub fn rule_packets(&self) -> u64 {
        self.table.values().map(|r| r.packets).sum()
    }
}
