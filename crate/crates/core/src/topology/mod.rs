//! AS-level and switch-level topology as seen by one controller.

mod paths;
mod probe;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{AsId, SwitchId};
use crate::policy::{AsDescriptor, Ipv4Cidr, SecurityLabel};

pub use paths::{find_as_paths, find_switch_path, AsMap};
pub use probe::{probe_topology, ProbeReply};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("no path from {from} to {to} satisfies the label constraint")]
    NoPath { from: String, to: String },
    #[error("unknown switch `{0}`")]
    UnknownSwitch(SwitchId),
    #[error("required path rejected: {0}")]
    InvalidPath(String),
}

/// The inter-AS graph of a world. Only used to drive simulated probes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AsGraph {
    pub domains: BTreeMap<AsId, AsDescriptor>,
    pub adjacency: BTreeMap<AsId, BTreeSet<AsId>>,
}

impl AsGraph {
    pub fn add_domain(&mut self, d: AsDescriptor) {
        self.adjacency.entry(d.id.clone()).or_default();
        self.domains.insert(d.id.clone(), d);
    }

    pub fn link(&mut self, a: &AsId, b: &AsId) {
        self.adjacency.entry(a.clone()).or_default().insert(b.clone());
        self.adjacency.entry(b.clone()).or_default().insert(a.clone());
    }

    pub fn neighbors(&self, a: &AsId) -> impl Iterator<Item = &AsId> {
        self.adjacency.get(a).into_iter().flatten()
    }

    pub fn are_neighbors(&self, a: &AsId, b: &AsId) -> bool {
        self.adjacency.get(a).is_some_and(|n| n.contains(b))
    }
}

/// One row of a controller's view of a foreign AS.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyEntry {
    pub as_id: AsId,
    pub sec_label: SecurityLabel,
    pub hops: u32,
    pub next_hop_gateway: SwitchId,
    pub subnet: Ipv4Cidr,
    pub as_type: String,
}

/// Switch adjacency of one domain with per-switch labels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntraGraph {
    pub labels: BTreeMap<SwitchId, SecurityLabel>,
    pub adjacency: BTreeMap<SwitchId, BTreeSet<SwitchId>>,
}

impl IntraGraph {
    pub fn add_switch(&mut self, id: SwitchId, label: SecurityLabel) {
        self.adjacency.entry(id.clone()).or_default();
        self.labels.insert(id, label);
    }

    pub fn link(&mut self, a: &SwitchId, b: &SwitchId) {
        self.adjacency.entry(a.clone()).or_default().insert(b.clone());
        self.adjacency.entry(b.clone()).or_default().insert(a.clone());
    }

    pub fn contains(&self, s: &SwitchId) -> bool {
        self.labels.contains_key(s)
    }

    pub fn label(&self, s: &SwitchId) -> Option<SecurityLabel> {
        self.labels.get(s).copied()
    }

    pub fn neighbors(&self, s: &SwitchId) -> impl Iterator<Item = &SwitchId> {
        self.adjacency.get(s).into_iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A controller's topology repository.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyRepository {
    pub owner: AsDescriptor,
    pub entries: BTreeMap<AsId, TopologyEntry>,
    pub intra: IntraGraph,
}

impl TopologyRepository {
    /// The foreign AS whose subnet contains `ip`, if any.
    pub fn resolve(&self, ip: std::net::Ipv4Addr) -> Option<&TopologyEntry> {
        self.entries.values().find(|e| e.subnet.contains(ip))
    }

    pub fn neighbors(&self) -> impl Iterator<Item = &TopologyEntry> {
        self.entries.values().filter(|e| e.hops == 1)
    }

    pub fn is_neighbor(&self, a: &AsId) -> bool {
        self.entries.get(a).is_some_and(|e| e.hops == 1)
    }
}
