//! Handles, policy transfer tokens and their integrity tags.
//!
//! Tags are HMAC-SHA256 over a canonical text form, keyed with the key of
//! the domain that last wrote the object. Each domain holds its own key and
//! the verification keys of its neighbours.

use std::collections::BTreeMap;
use std::fmt;

use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use crate::ids::AsId;
use crate::policy::Constraint;

type HmacSha256 = Hmac<Sha256>;

pub const TAG_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IntegrityError {
    #[error("handle has an empty visited list")]
    Empty,
    #[error("handle visits {0} twice")]
    Duplicate(AsId),
    #[error("handle origin {origin} is not the first visited domain")]
    Origin { origin: AsId },
    #[error("handle already visited {0}")]
    Loop(AsId),
    #[error("last visited domain {0} is not a neighbour")]
    NotNeighbour(AsId),
    #[error("no verification key for {0}")]
    UnknownKey(AsId),
    #[error("integrity tag does not verify")]
    BadTag,
    #[error("flow id mismatch: handle `{found}`, packet `{expected}`")]
    FlowMismatch { expected: String, found: String },
}

/// Keys a controller can tag and verify with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyRing {
    pub own: AsId,
    keys: BTreeMap<AsId, Vec<u8>>,
}

impl KeyRing {
    pub fn new(own: AsId, key: impl Into<Vec<u8>>) -> Self {
        let mut keys = BTreeMap::new();
        keys.insert(own.clone(), key.into());
        Self { own, keys }
    }

    pub fn add_peer(&mut self, peer: AsId, key: impl Into<Vec<u8>>) {
        self.keys.insert(peer, key.into());
    }

    pub fn key(&self, id: &AsId) -> Option<&[u8]> {
        self.keys.get(id).map(Vec::as_slice)
    }

    fn own_key(&self) -> &[u8] {
        self.key(&self.own).expect("own key present")
    }
}

fn mac(key: &[u8], msg: &str) -> [u8; TAG_LEN] {
    let mut m = HmacSha256::new_from_slice(key).expect("any key length");
    m.update(msg.as_bytes());
    m.finalize().into_bytes().into()
}

fn verify(key: &[u8], msg: &str, tag: &[u8; TAG_LEN]) -> bool {
    let mut m = HmacSha256::new_from_slice(key).expect("any key length");
    m.update(msg.as_bytes());
    m.verify_slice(tag).is_ok()
}

mod hex_tag {
    use super::TAG_LEN;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &[u8; TAG_LEN], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; TAG_LEN], D::Error> {
        let s = String::deserialize(d)?;
        super::parse_tag(&s).ok_or_else(|| serde::de::Error::custom("bad tag"))
    }
}

pub(crate) fn parse_tag(s: &str) -> Option<[u8; TAG_LEN]> {
    hex::decode(s).ok()?.try_into().ok()
}

fn join_ids(ids: &[AsId]) -> String {
    ids.iter().map(AsId::as_str).collect::<Vec<_>>().join(",")
}

/// Integrity-tagged list of domains a flow has passed through.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handle {
    pub flow_id: String,
    pub origin: AsId,
    pub visited: Vec<AsId>,
    #[serde(with = "hex_tag")]
    pub tag: [u8; TAG_LEN],
}

impl Handle {
    pub fn canonical(flow_id: &str, origin: &AsId, visited: &[AsId]) -> String {
        format!("handle/v1|flow={flow_id}|origin={origin}|visited={}", join_ids(visited))
    }

    /// New handle at the source domain.
    pub fn create(keys: &KeyRing, flow_id: &str) -> Handle {
        let visited = vec![keys.own.clone()];
        let tag = mac(keys.own_key(), &Self::canonical(flow_id, &keys.own, &visited));
        Handle {
            flow_id: flow_id.to_string(),
            origin: keys.own.clone(),
            visited,
            tag,
        }
    }

    /// Checks the handle as received by `keys.own`.
    pub fn validate(
        &self,
        keys: &KeyRing,
        is_neighbour: impl Fn(&AsId) -> bool,
        flow_id: &str,
    ) -> Result<(), IntegrityError> {
        let last = self.visited.last().ok_or(IntegrityError::Empty)?;
        if self.visited[0] != self.origin {
            return Err(IntegrityError::Origin {
                origin: self.origin.clone(),
            });
        }
        for (i, a) in self.visited.iter().enumerate() {
            if self.visited[..i].contains(a) {
                return Err(IntegrityError::Duplicate(a.clone()));
            }
        }
        if self.visited.contains(&keys.own) {
            return Err(IntegrityError::Loop(keys.own.clone()));
        }
        if !is_neighbour(last) {
            return Err(IntegrityError::NotNeighbour(last.clone()));
        }
        let key = keys
            .key(last)
            .ok_or_else(|| IntegrityError::UnknownKey(last.clone()))?;
        if !verify(key, &Self::canonical(&self.flow_id, &self.origin, &self.visited), &self.tag) {
            return Err(IntegrityError::BadTag);
        }
        if self.flow_id != flow_id {
            return Err(IntegrityError::FlowMismatch {
                expected: flow_id.to_string(),
                found: self.flow_id.clone(),
            });
        }
        Ok(())
    }

    /// Appends `keys.own` and re-tags. Validate first.
    pub fn extend(&self, keys: &KeyRing) -> Handle {
        let mut visited = self.visited.clone();
        visited.push(keys.own.clone());
        let tag = mac(keys.own_key(), &Self::canonical(&self.flow_id, &self.origin, &visited));
        Handle {
            flow_id: self.flow_id.clone(),
            origin: self.origin.clone(),
            visited,
            tag,
        }
    }
}

/// Flow-scoped constraints delegated to downstream domains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyTransferToken {
    pub flow_id: String,
    pub origin: AsId,
    /// Domain that wrote and tagged this copy.
    pub issuer: AsId,
    pub constraints: Vec<Constraint>,
    #[serde(with = "hex_tag")]
    pub tag: [u8; TAG_LEN],
}

pub(crate) fn constraints_field(cons: &[Constraint]) -> String {
    cons.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}

impl PolicyTransferToken {
    pub fn canonical(flow_id: &str, origin: &AsId, issuer: &AsId, cons: &[Constraint]) -> String {
        format!(
            "ptt/v1|flow={flow_id}|origin={origin}|issuer={issuer}|cons={}",
            constraints_field(cons)
        )
    }

    /// Token carrying the flow-scoped subset of `constraints`; `None` when
    /// that subset is empty.
    pub fn issue(
        keys: &KeyRing,
        flow_id: &str,
        origin: &AsId,
        constraints: &[Constraint],
    ) -> Option<PolicyTransferToken> {
        let mut cons: Vec<Constraint> = Vec::new();
        for c in constraints.iter().filter(|c| c.is_flow_scoped()) {
            if !cons.contains(c) {
                cons.push(c.clone());
            }
        }
        if cons.is_empty() {
            return None;
        }
        let tag = mac(keys.own_key(), &Self::canonical(flow_id, origin, &keys.own, &cons));
        Some(PolicyTransferToken {
            flow_id: flow_id.to_string(),
            origin: origin.clone(),
            issuer: keys.own.clone(),
            constraints: cons,
            tag,
        })
    }

    pub fn verify(&self, keys: &KeyRing, expected_issuer: &AsId, flow_id: &str) -> bool {
        if &self.issuer != expected_issuer || self.flow_id != flow_id {
            return false;
        }
        if !self.constraints.iter().all(Constraint::is_flow_scoped) {
            return false;
        }
        keys.key(&self.issuer).is_some_and(|k| {
            verify(
                k,
                &Self::canonical(&self.flow_id, &self.origin, &self.issuer, &self.constraints),
                &self.tag,
            )
        })
    }
}

/// What rides along with a packet across a domain boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedHeader {
    pub handle: Handle,
    pub ptt: Option<PolicyTransferToken>,
}

impl fmt::Display for Handle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "handle flow={} origin={} visited={} tag={}",
            self.flow_id,
            self.origin,
            join_ids(&self.visited),
            hex::encode(self.tag)
        )
    }
}

impl fmt::Display for PolicyTransferToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ptt flow={} origin={} issuer={} cons={} tag={}",
            self.flow_id,
            self.origin,
            self.issuer,
            constraints_field(&self.constraints),
            hex::encode(self.tag)
        )
    }
}
