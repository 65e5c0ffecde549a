//! Inputs shared by the benchmarks.

use std::net::Ipv4Addr;
use std::path::PathBuf;

use pbsa::dataplane::{FlowAction, FlowMatch, FlowRule, Packet, PortPeer, RuleOrigin, Switch};
use pbsa::harness::{load_scenario, Scenario};
use pbsa::{parse_compact_pe, FlowContext, MacAddr, PacketKind, PolicyExpression, SecurityLabel};

pub fn scenario(name: &str) -> Scenario {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    load_scenario(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// `n - 1` non-matching source-pinned expressions followed by one that
/// matches [`context`].
pub fn repository(n: usize) -> Vec<PolicyExpression> {
    let mut v: Vec<PolicyExpression> = (1..n)
        .map(|i| {
            let ip = Ipv4Addr::from(0xF000_0000u32 + i as u32);
            parse_compact_pe(&format!("p{i}=<*, *, *, {ip}, *, *, *, *, *, *, 80, *, *>:<allow>")).unwrap()
        })
        .collect();
    v.push(parse_compact_pe("web=<*, *, *, *, 10.1.0.20, *, *, *, *, *, (80;443), *, *>:<allow>").unwrap());
    v
}

pub fn context() -> FlowContext {
    FlowContext {
        flow_id: "10.1.0.10:40000>10.1.0.20:80/tcp".into(),
        src_as: None,
        dst_as: None,
        src_ip: Ipv4Addr::new(10, 1, 0, 10),
        dst_ip: Ipv4Addr::new(10, 1, 0, 20),
        src_mac: MacAddr([2, 0, 0, 0, 0, 10]),
        dst_mac: None,
        user: None,
        service_port: 80,
        packet_type: PacketKind::Http,
        timestamp: 0,
        traversed_path: vec![],
        ingress_switch: None,
        signature: None,
    }
}

pub fn packet(src_port: u16) -> Packet {
    Packet {
        id: 0,
        src_ip: Ipv4Addr::new(10, 1, 0, 10),
        dst_ip: Ipv4Addr::new(10, 1, 0, 20),
        src_mac: MacAddr([2, 0, 0, 0, 0, 10]),
        dst_mac: None,
        kind: PacketKind::Http,
        tp_src: src_port,
        tp_dst: 80,
        size: 100,
        timestamp: 0,
        signature: None,
        augmentation: None,
    }
}

/// A switch holding `n` connection-granularity forward rules.
pub fn loaded_switch(n: u16) -> Switch {
    let mut s = Switch::new("SW1".into(), "AS1".into(), SecurityLabel::LOWEST);
    s.capacity = usize::from(n) + 16;
    s.ports.insert(1, PortPeer::Host("h".into()));
    for port in 0..n {
        let p = packet(10_000 + port);
        let m = FlowMatch {
            proto: Some(p.proto()),
            src_ip: Some(p.src_ip),
            dst_ip: Some(p.dst_ip),
            tp_src: Some(p.tp_src),
            tp_dst: Some(p.tp_dst),
            ..FlowMatch::default()
        };
        s.install(FlowRule::new(1000, m, FlowAction::Forward(1), RuleOrigin::Baseline)).unwrap();
    }
    s
}
