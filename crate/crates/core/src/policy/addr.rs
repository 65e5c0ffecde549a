//! IPv4, CIDR and MAC address values used in policy fields.
//!
//! Dotted quads are read leniently: octets with leading zeros such as
//! `172.56.16.06` are decimal, since operators write them that way.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::PolicyError;

pub fn parse_ipv4(text: &str) -> Result<Ipv4Addr, PolicyError> {
    let bad = || PolicyError::Value {
        what: "IPv4 address",
        text: text.to_string(),
    };
    let mut octets = [0u8; 4];
    let mut parts = text.trim().split('.');
    for slot in octets.iter_mut() {
        let part = parts.next().ok_or_else(bad)?;
        if part.is_empty() || part.len() > 3 || !part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        *slot = part.parse().map_err(|_| bad())?;
    }
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok(Ipv4Addr::from(octets))
}

/// IPv4 prefix. The stored address is always the masked network address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ipv4Cidr {
    network: Ipv4Addr,
    prefix: u8,
}

impl Ipv4Cidr {
    pub fn new(addr: Ipv4Addr, prefix: u8) -> Option<Self> {
        (prefix <= 32).then(|| Self {
            network: Ipv4Addr::from(u32::from(addr) & mask(prefix)),
            prefix,
        })
    }

    pub fn network(&self) -> Ipv4Addr {
        self.network
    }

    pub fn prefix(&self) -> u8 {
        self.prefix
    }

    pub fn contains(&self, ip: Ipv4Addr) -> bool {
        u32::from(ip) & mask(self.prefix) == u32::from(self.network)
    }

    /// The `n`-th address inside the prefix (wrapping within the host part).
    pub fn nth(&self, n: u32) -> Ipv4Addr {
        let host_bits = 32 - self.prefix as u32;
        let host = if host_bits == 32 { n } else { n & ((1u32 << host_bits) - 1) };
        Ipv4Addr::from(u32::from(self.network) | host)
    }

    pub fn size(&self) -> u64 {
        1u64 << (32 - self.prefix as u32)
    }
}

fn mask(prefix: u8) -> u32 {
    if prefix == 0 {
        0
    } else {
        !0u32 << (32 - prefix as u32)
    }
}

impl FromStr for Ipv4Cidr {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PolicyError::Value {
            what: "CIDR prefix",
            text: s.to_string(),
        };
        let (addr, len) = s.trim().split_once('/').ok_or_else(bad)?;
        let addr = parse_ipv4(addr).map_err(|_| bad())?;
        let len: u8 = len.trim().parse().map_err(|_| bad())?;
        Ipv4Cidr::new(addr, len).ok_or_else(bad)
    }
}

impl fmt::Display for Ipv4Cidr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.network, self.prefix)
    }
}

/// Six-octet hardware address, rendered lowercase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    /// Locally administered address derived from a counter; used for synthetic hosts.
    pub fn synthetic(n: u32) -> Self {
        let b = n.to_be_bytes();
        MacAddr([0x02, 0x00, b[0], b[1], b[2], b[3]])
    }
}

impl FromStr for MacAddr {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PolicyError::Value {
            what: "MAC address",
            text: s.to_string(),
        };
        let mut out = [0u8; 6];
        let mut parts = s.trim().split(':');
        for slot in out.iter_mut() {
            let part = parts.next().ok_or_else(bad)?;
            if part.is_empty() || part.len() > 2 {
                return Err(bad());
            }
            *slot = u8::from_str_radix(part, 16).map_err(|_| bad())?;
        }
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(MacAddr(out))
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

macro_rules! serde_via_str {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

serde_via_str!(Ipv4Cidr);
serde_via_str!(MacAddr);

/// Serde adapter for `Ipv4Addr` fields that accepts leading-zero octets.
pub mod lenient_ip {
    use super::*;

    pub fn serialize<S: Serializer>(ip: &Ipv4Addr, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(ip)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Ipv4Addr, D::Error> {
        let s = String::deserialize(d)?;
        parse_ipv4(&s).map_err(serde::de::Error::custom)
    }
}
