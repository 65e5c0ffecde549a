//! Simulated TTL probing.
//!
//! A probe with TTL `t` leaves the owner through every gateway and expires
//! `t` AS hops away; the controller where it expires answers with its
//! address, id and label. Repeating for `t = 1..=max_ttl` yields the
//! repository.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use super::{AsGraph, IntraGraph, TopologyEntry, TopologyRepository};
use crate::ids::{AsId, SwitchId};
use crate::policy::SecurityLabel;

/// Payload of the modified TTL-exceeded reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeReply {
    pub ttl: u32,
    pub sender_ip: Ipv4Addr,
    pub responder: AsId,
    pub label: SecurityLabel,
    /// First AS hop the probe took from the owner.
    pub via: AsId,
}

/// Replies to a single probe sent with the given TTL.
fn send_probe(graph: &AsGraph, owner: &AsId, ttl: u32) -> Vec<ProbeReply> {
    // frontier: AS -> smallest first hop reaching it on a shortest walk
    let mut seen: BTreeSet<AsId> = BTreeSet::from([owner.clone()]);
    let mut frontier: BTreeMap<AsId, AsId> = graph
        .neighbors(owner)
        .map(|n| (n.clone(), n.clone()))
        .collect();
    seen.extend(frontier.keys().cloned());
    for _ in 1..ttl {
        let mut next: BTreeMap<AsId, AsId> = BTreeMap::new();
        for (node, via) in &frontier {
            for n in graph.neighbors(node) {
                if seen.contains(n) {
                    continue;
                }
                next.entry(n.clone())
                    .and_modify(|v| {
                        if via < v {
                            *v = via.clone();
                        }
                    })
                    .or_insert_with(|| via.clone());
            }
        }
        seen.extend(next.keys().cloned());
        frontier = next;
    }
    frontier
        .into_iter()
        .filter_map(|(id, via)| {
            let d = graph.domains.get(&id)?;
            Some(ProbeReply {
                ttl,
                sender_ip: d.subnet.nth(1),
                responder: id,
                label: d.label,
                via,
            })
        })
        .collect()
}

/// Builds `owner`'s repository by probing with TTL 1 through `max_ttl`.
pub fn probe_topology(
    graph: &AsGraph,
    owner: &AsId,
    max_ttl: u32,
    intra: IntraGraph,
) -> Option<TopologyRepository> {
    let owner_desc = graph.domains.get(owner)?.clone();
    let mut entries = BTreeMap::new();
    for ttl in 1..=max_ttl.max(1) {
        for r in send_probe(graph, owner, ttl) {
            let d = &graph.domains[&r.responder];
            entries.entry(r.responder.clone()).or_insert(TopologyEntry {
                as_id: r.responder.clone(),
                sec_label: r.label,
                hops: r.ttl,
                next_hop_gateway: SwitchId::gateway(owner, &r.via),
                subnet: d.subnet,
                as_type: d.as_type.clone(),
            });
        }
    }
    Some(TopologyRepository {
        owner: owner_desc,
        entries,
        intra,
    })
}
