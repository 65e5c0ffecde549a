#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;
use std::path::PathBuf;

use pbsa::harness::{load_scenario, MetricsReport, Scenario, Sim};
use pbsa::topology::AsMap;
use pbsa::{
    Action, AsDescriptor, AsId, Constraint, EndpointSelector, FlowContext, Ipv4Cidr, LabelConstraint, MacAddr,
    PacketKind, PacketPredicate, PathSpec, PolicyExpression, PortRange, Proto, SecProfile, SecurityLabel, SwitchId,
    Validity,
};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

pub fn load(name: &str) -> Scenario {
    load_scenario(scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn run_variant(s: &Scenario, name: &str) -> MetricsReport {
    let v = s
        .variant_list()
        .into_iter()
        .find(|v| v.name == name)
        .unwrap_or_else(|| panic!("{} has no variant {name}", s.name));
    Sim::new(&s.with_variant(&v)).expect("world builds").with_variant_name(&v.name).run()
}

pub fn sl(n: u32) -> SecurityLabel {
    SecurityLabel::new(n).expect("nonzero rank")
}

pub fn ids(v: &[&str]) -> Vec<AsId> {
    v.iter().map(|s| AsId::from(*s)).collect()
}

pub fn switches(v: &[&str]) -> Vec<SwitchId> {
    v.iter().map(|s| SwitchId::from(*s)).collect()
}

// ---- random flow contexts and expressions ----

pub fn pool() -> Vec<AsDescriptor> {
    let d = |id: &str, net: [u8; 4], prefix, ty: &str, label| AsDescriptor {
        id: id.into(),
        subnet: Ipv4Cidr::new(Ipv4Addr::from(net), prefix).unwrap(),
        as_type: ty.into(),
        label: sl(label),
    };
    vec![
        d("AS1", [10, 0, 0, 0], 24, "EDU", 2),
        d("AS2", [172, 16, 0, 0], 16, "ENT", 3),
        d("AS3", [172, 20, 0, 0], 16, "ISP", 1),
        d("AS4", [192, 168, 52, 0], 24, "EDU", 4),
    ]
}

const KINDS: [&str; 8] = ["HTTP", "HTTPS", "SSH", "FTP", "DNS", "SYN", "ICMP", "SCAN"];
const USERS: [&str; 3] = ["Alice", "bob", "carol"];
const GATEWAYS: [&str; 4] = ["1SW2", "2SW1", "2SW3", "SW1"];
const PORTS: [u16; 6] = [21, 22, 53, 80, 443, 8080];

fn kind(rng: &mut impl Rng) -> PacketKind {
    KINDS.choose(rng).unwrap().parse().unwrap()
}

fn mac(rng: &mut impl Rng) -> MacAddr {
    MacAddr([rng.gen_range(0..4), 0, 0, 0, rng.gen_range(0..4), rng.gen()])
}

fn ip_in(rng: &mut impl Rng, d: &AsDescriptor) -> Ipv4Addr {
    d.subnet.nth(rng.gen_range(1..(d.subnet.size().min(300) as u32 - 1)))
}

pub fn random_ctx(rng: &mut impl Rng) -> FlowContext {
    let pool = pool();
    let src = pool.choose(rng).unwrap().clone();
    let dst = pool.choose(rng).unwrap().clone();
    let src_ip = ip_in(rng, &src);
    let dst_ip = ip_in(rng, &dst);
    let mut traversed: Vec<AsId> = pool.iter().map(|d| d.id.clone()).collect();
    traversed.shuffle(rng);
    traversed.truncate(rng.gen_range(0..4));
    FlowContext {
        flow_id: format!("f{}", rng.gen_range(0..4)),
        src_as: rng.gen_bool(0.9).then_some(src),
        dst_as: rng.gen_bool(0.9).then_some(dst),
        src_ip,
        dst_ip,
        src_mac: mac(rng),
        dst_mac: rng.gen_bool(0.5).then(|| mac(rng)),
        user: rng.gen_bool(0.6).then(|| USERS.choose(rng).unwrap().to_string()),
        service_port: if rng.gen_bool(0.8) { *PORTS.choose(rng).unwrap() } else { rng.gen() },
        packet_type: kind(rng),
        timestamp: rng.gen_range(0..1000),
        traversed_path: traversed,
        ingress_switch: rng.gen_bool(0.7).then(|| SwitchId::from(*GATEWAYS.choose(rng).unwrap())),
        signature: rng.gen_bool(0.2).then(|| "worm".to_string()),
    }
}

/// Whether a generated field should agree with the context, be random, or
/// be left as a wildcard.
#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Wild,
    Agree,
    Random,
}

fn mode(rng: &mut impl Rng) -> Mode {
    match rng.gen_range(0..10) {
        0..=4 => Mode::Wild,
        5..=8 => Mode::Agree,
        _ => Mode::Random,
    }
}

fn label_req(rng: &mut impl Rng, agree_with: Option<SecurityLabel>) -> LabelConstraint {
    match agree_with {
        Some(l) => match rng.gen_range(0..3) {
            0 => LabelConstraint::Eq(l),
            1 => LabelConstraint::Geq(sl(rng.gen_range(1..=l.rank()))),
            _ => LabelConstraint::Leq(sl(rng.gen_range(l.rank()..=5))),
        },
        None => {
            let b = sl(rng.gen_range(1..=5));
            [LabelConstraint::Eq(b), LabelConstraint::Geq(b), LabelConstraint::Leq(b)][rng.gen_range(0..3)]
        }
    }
}

fn selector(rng: &mut impl Rng, desc: Option<&AsDescriptor>, ip: Ipv4Addr, gateway: Option<&SwitchId>) -> EndpointSelector {
    let mut s = EndpointSelector::default();
    let pool = pool();
    let agree = desc.filter(|_| rng.gen_bool(0.85));
    let other = pool.choose(rng).unwrap();
    let d = agree.unwrap_or(other);
    let mut any = false;
    while !any {
        if rng.gen_bool(0.4) {
            s.as_id = Some(d.id.clone());
            any = true;
        }
        if rng.gen_bool(0.4) {
            let sub = if agree.is_some() || rng.gen_bool(0.5) {
                let wide = rng.gen_range(0..=d.subnet.prefix());
                Ipv4Cidr::new(if agree.is_some() { ip } else { d.subnet.network() }, wide).unwrap()
            } else {
                d.subnet
            };
            s.subnet = Some(sub);
            any = true;
        }
        if rng.gen_bool(0.3) {
            s.as_type = Some(if rng.gen_bool(0.2) { d.as_type.to_lowercase() } else { d.as_type.clone() });
            any = true;
        }
        if rng.gen_bool(0.3) {
            s.label_req = label_req(rng, agree.map(|d| d.label));
            any = true;
        }
        if rng.gen_bool(0.2) {
            // Descriptors only recognise gateway-shaped names.
            s.gateway = Some(match gateway {
                Some(g) if g.gateway_parts().is_some() && rng.gen_bool(0.8) => g.clone(),
                _ => SwitchId::from(*GATEWAYS[..3].choose(rng).unwrap()),
            });
            any = true;
        }
    }
    s
}

fn constraint(rng: &mut impl Rng, ctx: &FlowContext, agree: bool, scope_flow: bool) -> Constraint {
    let pick = if scope_flow { rng.gen_range(0..5) } else { rng.gen_range(3..6) };
    match pick {
        0 => Constraint::PacketAttr(PacketPredicate::Type(if agree { ctx.packet_type.clone() } else { kind(rng) })),
        1 => Constraint::PacketAttr(PacketPredicate::Port(if agree { ctx.service_port } else { *PORTS.choose(rng).unwrap() })),
        2 => Constraint::PacketAttr(PacketPredicate::Proto(if agree {
            ctx.packet_type.proto()
        } else {
            [Proto::Tcp, Proto::Udp, Proto::Icmp][rng.gen_range(0..3)]
        })),
        3 => Constraint::LabelPath(label_req(rng, None)),
        4 => Constraint::RateThreshold(rng.gen_range(1..1000)),
        _ => Constraint::Signature(if agree {
            ctx.signature.clone().unwrap_or_else(|| "worm".into())
        } else {
            ["worm", "scan"][rng.gen_range(0..2)].into()
        }),
    }
}

/// An expression whose fields are each wildcard, chosen to agree with
/// `ctx`, or random.
pub fn random_pe(rng: &mut impl Rng, ctx: &FlowContext, id: usize) -> PolicyExpression {
    let mut pe = PolicyExpression::wildcard(
        format!("pe{id:05}"),
        if rng.gen_bool(0.7) { Action::Allow } else { Action::Deny },
    );
    let m = |rng: &mut _| mode(rng);
    match m(rng) {
        Mode::Wild => {}
        Mode::Agree => pe.flow_id = Some(ctx.flow_id.clone()),
        Mode::Random => pe.flow_id = Some(format!("f{}", rng.gen_range(0..4))),
    }
    let ingress = ctx.ingress_switch.as_ref();
    match m(rng) {
        Mode::Wild => {}
        Mode::Agree => pe.source = selector(rng, ctx.src_as.as_ref(), ctx.src_ip, ingress),
        Mode::Random => pe.source = selector(rng, None, ctx.src_ip, None),
    }
    match m(rng) {
        Mode::Wild => {}
        Mode::Agree => pe.dest = selector(rng, ctx.dst_as.as_ref(), ctx.dst_ip, None),
        Mode::Random => pe.dest = selector(rng, None, ctx.dst_ip, None),
    }
    let pool = pool();
    match m(rng) {
        Mode::Wild => {}
        Mode::Agree => pe.source.host_ip = Some(ctx.src_ip),
        Mode::Random => {
            let d = pool.choose(rng).unwrap();
            pe.source.host_ip = Some(ip_in(rng, d));
        }
    }
    match m(rng) {
        Mode::Wild => {}
        Mode::Agree => pe.dest.host_ip = Some(ctx.dst_ip),
        Mode::Random => {
            let d = pool.choose(rng).unwrap();
            pe.dest.host_ip = Some(ip_in(rng, d));
        }
    }
    match m(rng) {
        Mode::Wild => {}
        Mode::Agree => pe.source.host_mac = Some(ctx.src_mac),
        Mode::Random => pe.source.host_mac = Some(mac(rng)),
    }
    match m(rng) {
        Mode::Wild => {}
        Mode::Agree => pe.dest.host_mac = Some(ctx.dst_mac.unwrap_or_else(|| mac(rng))),
        Mode::Random => pe.dest.host_mac = Some(mac(rng)),
    }
    match m(rng) {
        Mode::Wild => {}
        Mode::Agree => pe.user = Some(ctx.user.clone().unwrap_or_else(|| "Alice".into())),
        Mode::Random => pe.user = Some(USERS.choose(rng).unwrap().to_string()),
    }
    for (scope_flow, slot) in [(true, 0), (false, 1)] {
        let md = m(rng);
        if md == Mode::Wild {
            continue;
        }
        let n = rng.gen_range(1..=2);
        let mut v: Vec<Constraint> = Vec::new();
        for _ in 0..n {
            let c = constraint(rng, ctx, md == Mode::Agree, scope_flow);
            if !v.contains(&c) {
                v.push(c);
            }
        }
        if slot == 0 {
            pe.flow_cons = v;
        } else {
            pe.dom_cons = v;
        }
    }
    match m(rng) {
        Mode::Wild => {}
        md => {
            let mut v: Vec<PortRange> = (0..rng.gen_range(1..3))
                .map(|_| PortRange::single(*PORTS.choose(rng).unwrap()))
                .collect();
            if md == Mode::Agree {
                let p = ctx.service_port;
                v.push(if rng.gen_bool(0.5) {
                    PortRange::single(p)
                } else {
                    PortRange { lo: p.saturating_sub(5), hi: p.saturating_add(5) }
                });
            }
            pe.services = Some(pbsa::policy::expr::normalize_services(v));
        }
    }
    if m(rng) != Mode::Wild {
        let conf = rng.gen();
        pe.sec_profile = Some(SecProfile { conf, intg: !conf || rng.gen() });
    }
    match m(rng) {
        Mode::Wild => {}
        Mode::Agree if !ctx.traversed_path.is_empty() && rng.gen_bool(0.8) => {
            pe.path = Some(PathSpec::As(ctx.traversed_path.clone()))
        }
        Mode::Agree => pe.path = Some(PathSpec::Switches(switches(&["SW1", "SW5", "SW4"]))),
        Mode::Random => {
            let mut v: Vec<AsId> = pool.iter().map(|d| d.id.clone()).collect();
            v.shuffle(rng);
            v.truncate(rng.gen_range(1..4));
            pe.path = Some(PathSpec::As(v));
        }
    }
    match m(rng) {
        Mode::Wild => {}
        Mode::Agree => {
            let t = ctx.timestamp;
            pe.validity = Validity::new(t.saturating_sub(rng.gen_range(0..50)), t + rng.gen_range(1..50));
        }
        Mode::Random => {
            let a = rng.gen_range(0..1000);
            pe.validity = Validity::new(a, a + rng.gen_range(0..200));
        }
    }
    pe
}

/// Conjunction of per-field predicates, written from the field semantics
/// rather than from the library's matcher.
pub fn oracle_match(pe: &PolicyExpression, ctx: &FlowContext) -> bool {
    fn label_ok(c: &LabelConstraint, l: SecurityLabel) -> bool {
        match c {
            LabelConstraint::Any => true,
            LabelConstraint::Eq(b) => l.rank() == b.rank(),
            LabelConstraint::Geq(b) => l.rank() >= b.rank(),
            LabelConstraint::Leq(b) => l.rank() <= b.rank(),
        }
    }
    fn in_subnet(c: &Ipv4Cidr, ip: Ipv4Addr) -> bool {
        let p = c.prefix() as u32;
        let shift = 32 - p;
        p == 0 || (u32::from(ip) >> shift) == (u32::from(c.network()) >> shift)
    }
    fn side(sel: &EndpointSelector, d: Option<&AsDescriptor>, ip: Ipv4Addr) -> bool {
        let id_ok = sel.as_id.as_ref().is_none_or(|id| d.is_some_and(|d| &d.id == id));
        let sub_ok = sel.subnet.as_ref().is_none_or(|c| in_subnet(c, ip));
        let ty_ok = sel
            .as_type
            .as_ref()
            .is_none_or(|t| d.is_some_and(|d| d.as_type.eq_ignore_ascii_case(t)));
        let lab_ok = matches!(sel.label_req, LabelConstraint::Any) || d.is_some_and(|d| label_ok(&sel.label_req, d.label));
        let host_ok = sel.host_ip.is_none_or(|h| h == ip);
        id_ok && sub_ok && ty_ok && lab_ok && host_ok
    }
    let cons_ok = pe.flow_cons.iter().chain(&pe.dom_cons).all(|c| match c {
        Constraint::PacketAttr(PacketPredicate::Type(k)) => *k == ctx.packet_type,
        Constraint::PacketAttr(PacketPredicate::Port(p)) => *p == ctx.service_port,
        Constraint::PacketAttr(PacketPredicate::Proto(p)) => *p == ctx.packet_type.proto(),
        Constraint::Signature(s) => ctx.signature.as_ref() == Some(s),
        Constraint::LabelPath(_) | Constraint::RateThreshold(_) => true,
    });
    let checks = [
        pe.flow_id.as_ref().is_none_or(|f| *f == ctx.flow_id),
        side(&pe.source, ctx.src_as.as_ref(), ctx.src_ip),
        pe.source.gateway.as_ref().is_none_or(|g| ctx.ingress_switch.as_ref() == Some(g)),
        side(&pe.dest, ctx.dst_as.as_ref(), ctx.dst_ip),
        pe.source.host_mac.is_none_or(|m| m == ctx.src_mac),
        pe.dest.host_mac.is_none_or(|m| Some(m) == ctx.dst_mac),
        pe.user.as_ref().is_none_or(|u| Some(u) == ctx.user.as_ref()),
        cons_ok,
        pe.services
            .as_ref()
            .is_none_or(|v| v.iter().any(|r| r.lo <= ctx.service_port && ctx.service_port <= r.hi)),
        match &pe.path {
            Some(PathSpec::As(seq)) => *seq == ctx.traversed_path,
            _ => true,
        },
        pe.validity
            .is_none_or(|v| v.start <= ctx.timestamp && ctx.timestamp < v.end),
    ];
    checks.iter().all(|c| *c)
}

// ---- random AS graphs ----

pub fn random_as_map(rng: &mut impl Rng, n: usize, p: f64) -> AsMap {
    let mut m = AsMap::default();
    for i in 1..=n {
        m.labels.insert(AsId::from(format!("AS{i}")), sl(rng.gen_range(1..=4)));
        m.adjacency.entry(AsId::from(format!("AS{i}"))).or_default();
    }
    for i in 1..=n {
        for j in (i + 1)..=n {
            if rng.gen_bool(p) {
                m.link(&AsId::from(format!("AS{i}")), &AsId::from(format!("AS{j}")));
            }
        }
    }
    m
}

/// Every simple path from src to dst by exhaustive enumeration, keeping
/// those whose interior nodes pass `keep`.
pub fn brute_force_paths(
    adj: &BTreeMap<AsId, BTreeSet<AsId>>,
    src: &AsId,
    dst: &AsId,
    keep: &dyn Fn(&AsId) -> bool,
) -> BTreeSet<Vec<AsId>> {
    let nodes: Vec<AsId> = adj.keys().cloned().collect();
    let mut out = BTreeSet::new();
    let mut stack: Vec<Vec<AsId>> = vec![vec![src.clone()]];
    while let Some(path) = stack.pop() {
        let last = path.last().unwrap();
        if last == dst && path.len() > 1 {
            if path[1..path.len() - 1].iter().all(keep) {
                out.insert(path);
            }
            continue;
        }
        for n in &nodes {
            if adj[last].contains(n) && !path.contains(n) {
                let mut p = path.clone();
                p.push(n.clone());
                stack.push(p);
            }
        }
    }
    out
}
