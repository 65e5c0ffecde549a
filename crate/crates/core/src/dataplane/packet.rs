use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::interdomain::AugmentedHeader;
use crate::policy::{MacAddr, PacketKind, Proto};

/// Identity of a flow as seen by rules and the miss buffer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub proto: Proto,
    pub tp_src: u16,
    pub tp_dst: u16,
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}>{}:{}/{}",
            self.src_ip, self.tp_src, self.dst_ip, self.tp_dst, self.proto
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    /// Simulator-assigned sequence number.
    pub id: u64,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_mac: MacAddr,
    pub dst_mac: Option<MacAddr>,
    pub kind: PacketKind,
    pub tp_src: u16,
    pub tp_dst: u16,
    pub size: u32,
    pub timestamp: u64,
    /// Attack-signature token carried by generated attack traffic.
    pub signature: Option<String>,
    /// Present only on copies crossing a domain boundary.
    pub augmentation: Option<AugmentedHeader>,
}

impl Packet {
    pub fn proto(&self) -> Proto {
        self.kind.proto()
    }

    pub fn flow_key(&self) -> FlowKey {
        FlowKey {
            src_ip: self.src_ip,
            dst_ip: self.dst_ip,
            proto: self.proto(),
            tp_src: self.tp_src,
            tp_dst: self.tp_dst,
        }
    }

    /// The service port a policy sees.
    pub fn service_port(&self) -> u16 {
        self.tp_dst
    }
}
