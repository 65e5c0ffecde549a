mod common;

use common::{ids, sl};
use hmac::{Hmac, Mac};
use pbsa::dataplane::Packet;
use pbsa::interdomain::{
    decode_augmented, encode_augmented, merge_constraints, AugmentedHeader, Handle, IntegrityError, KeyRing,
    PolicyTransferToken, WireError,
};
use pbsa::{AsId, Constraint, LabelConstraint, MacAddr, PacketKind, PacketPredicate, Proto};
use proptest::prelude::*;
use sha2::Sha256;

const FLOW: &str = "10.0.0.2:40000>192.168.52.72:443/tcp";

fn key_of(id: &str) -> Vec<u8> {
    format!("secret-of-{id}").into_bytes()
}

/// Every domain of the AS1..AS4 chain knows every other domain's key.
fn ring(own: &str) -> KeyRing {
    let mut k = KeyRing::new(own.into(), key_of(own));
    for peer in ["AS1", "AS2", "AS3", "AS4"] {
        if peer != own {
            k.add_peer(peer.into(), key_of(peer));
        }
    }
    k
}

/// The handle AS4 receives after AS1, AS2 and AS3.
fn chain_handle() -> Handle {
    let h = Handle::create(&ring("AS1"), FLOW);
    let h = h.extend(&ring("AS2"));
    h.extend(&ring("AS3"))
}

fn at_as4(h: &Handle) -> Result<(), IntegrityError> {
    h.validate(&ring("AS4"), |a| a.as_str() == "AS3", FLOW)
}

fn hmac_tag(key: &[u8], msg: &str) -> [u8; 32] {
    let mut m = Hmac::<Sha256>::new_from_slice(key).unwrap();
    m.update(msg.as_bytes());
    m.finalize().into_bytes().into()
}

#[test]
fn a_clean_chain_validates_at_the_last_hop() {
    let h = chain_handle();
    assert_eq!(h.visited, ids(&["AS1", "AS2", "AS3"]));
    assert_eq!(at_as4(&h), Ok(()));
    // The tag is HMAC-SHA256 under the last writer's key, computed here independently.
    let msg = format!("handle/v1|flow={FLOW}|origin=AS1|visited=AS1,AS2,AS3");
    assert_eq!(h.tag, hmac_tag(&key_of("AS3"), &msg));
    assert_eq!(h.extend(&ring("AS4")).visited, ids(&["AS1", "AS2", "AS3", "AS4"]));
}

#[test]
fn every_single_tag_bit_flip_is_caught() {
    let h = chain_handle();
    for bit in 0..256 {
        let mut t = h.clone();
        t.tag[bit / 8] ^= 1 << (bit % 8);
        assert_eq!(at_as4(&t), Err(IntegrityError::BadTag), "bit {bit}");
    }
}

fn permutations(v: &[&'static str]) -> Vec<Vec<&'static str>> {
    if v.len() <= 1 {
        return vec![v.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..v.len() {
        let mut rest = v.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

#[test]
fn reordered_visited_lists_are_rejected() {
    let h = chain_handle();
    let perms = permutations(&["AS1", "AS2", "AS3"]);
    assert_eq!(perms.len(), 6);
    for p in perms {
        let mut t = h.clone();
        t.visited = ids(&p);
        let r = at_as4(&t);
        assert_eq!(r.is_ok(), p == ["AS1", "AS2", "AS3"], "{p:?}: {r:?}");
    }
}

#[test]
fn single_field_mutations_are_rejected() {
    let h = chain_handle();
    let mut cases: Vec<(&str, Handle)> = Vec::new();
    let mut t = h.clone();
    t.visited.remove(0);
    cases.push(("drop first", t));
    let mut t = h.clone();
    t.visited.remove(1);
    cases.push(("drop middle", t));
    let mut t = h.clone();
    t.visited.push("AS9".into());
    cases.push(("append stranger", t));
    let mut t = h.clone();
    t.visited.insert(2, "AS2".into());
    cases.push(("duplicate", t));
    let mut t = h.clone();
    t.visited.push("AS4".into());
    cases.push(("loop through receiver", t));
    let mut t = h.clone();
    t.visited.clear();
    cases.push(("empty", t));
    let mut t = h.clone();
    t.origin = "AS2".into();
    cases.push(("origin", t));
    let mut t = h.clone();
    t.flow_id.push('x');
    cases.push(("flow id", t));
    // Re-tagged by AS2, whose hop is not the last one.
    let mut t = h.clone();
    t.tag = hmac_tag(&key_of("AS2"), &Handle::canonical(FLOW, &"AS1".into(), &t.visited));
    cases.push(("wrong signer", t));
    for (name, t) in cases {
        assert!(at_as4(&t).is_err(), "{name} accepted");
    }
}

#[test]
fn a_valid_handle_for_another_flow_is_refused() {
    let h = chain_handle();
    let r = h.validate(&ring("AS4"), |a| a.as_str() == "AS3", "other-flow");
    assert!(matches!(r, Err(IntegrityError::FlowMismatch { .. })));
}

#[test]
fn handles_from_non_neighbours_or_unknown_keys_fail() {
    let h = chain_handle();
    assert_eq!(
        h.validate(&ring("AS4"), |a| a.as_str() == "AS2", FLOW),
        Err(IntegrityError::NotNeighbour("AS3".into()))
    );
    let lonely = KeyRing::new("AS4".into(), key_of("AS4"));
    assert_eq!(
        h.validate(&lonely, |_| true, FLOW),
        Err(IntegrityError::UnknownKey("AS3".into()))
    );
}

fn ptt_constraints() -> Vec<Constraint> {
    vec![
        Constraint::LabelPath(LabelConstraint::Geq(sl(2))),
        Constraint::RateThreshold(5),
        Constraint::PacketAttr(PacketPredicate::Proto(Proto::Tcp)),
        Constraint::Signature("mirai".into()),
    ]
}

#[test]
fn tokens_carry_only_flow_scoped_constraints_and_resist_tampering() {
    let k2 = ring("AS2");
    let origin = AsId::from("AS1");
    let t = PolicyTransferToken::issue(&k2, FLOW, &origin, &ptt_constraints()).unwrap();
    assert_eq!(t.constraints.len(), 3);
    assert!(t.verify(&ring("AS3"), &"AS2".into(), FLOW));
    assert!(!t.verify(&ring("AS3"), &"AS1".into(), FLOW));
    assert!(!t.verify(&ring("AS3"), &"AS2".into(), "other"));
    let mut bad = Vec::new();
    let mut x = t.clone();
    x.constraints.pop();
    bad.push(x);
    let mut x = t.clone();
    x.constraints[1] = Constraint::RateThreshold(500);
    bad.push(x);
    let mut x = t.clone();
    x.constraints.push(Constraint::Signature("mirai".into()));
    bad.push(x);
    let mut x = t.clone();
    x.origin = "AS3".into();
    bad.push(x);
    for bit in (0..256).step_by(7) {
        let mut x = t.clone();
        x.tag[bit / 8] ^= 1 << (bit % 8);
        bad.push(x);
    }
    for x in bad {
        assert!(!x.verify(&ring("AS3"), &"AS2".into(), FLOW), "{x:?}");
    }
    let sig_only = [Constraint::Signature("mirai".into())];
    assert!(PolicyTransferToken::issue(&k2, FLOW, &origin, &sig_only).is_none());
}

fn augmented_packet(ptt: bool) -> Packet {
    let k2 = ring("AS2");
    let handle = Handle::create(&ring("AS1"), FLOW).extend(&k2);
    Packet {
        id: 7,
        src_ip: "10.0.0.2".parse().unwrap(),
        dst_ip: "192.168.52.72".parse().unwrap(),
        src_mac: MacAddr([0x0b, 0x3b, 0x5c, 0x2a, 0x9d, 0xe1]),
        dst_mac: None,
        kind: PacketKind::Https,
        tp_src: 40000,
        tp_dst: 443,
        size: 512,
        timestamp: 12,
        signature: None,
        augmentation: Some(AugmentedHeader {
            handle,
            ptt: ptt.then(|| PolicyTransferToken::issue(&k2, FLOW, &"AS1".into(), &ptt_constraints()).unwrap()),
        }),
    }
}

#[test]
fn wire_encoding_round_trips() {
    for ptt in [false, true] {
        let p = augmented_packet(ptt);
        let text = encode_augmented(&p).unwrap();
        assert!(text.starts_with("pbsa-augmented/1\npacket id=7 src=10.0.0.2 "));
        assert_eq!(text.lines().count(), 3 + usize::from(ptt));
        let back = decode_augmented(&text).unwrap();
        assert_eq!(back, p);
        let h = &back.augmentation.as_ref().unwrap().handle;
        assert_eq!(h.validate(&ring("AS3"), |a| a.as_str() == "AS2", FLOW), Ok(()));
    }
    let mut plain = augmented_packet(false);
    plain.augmentation = None;
    assert_eq!(encode_augmented(&plain), Err(WireError::NotAugmented));
}

#[test]
fn damaged_wire_text_is_rejected_with_a_line_number() {
    let text = encode_augmented(&augmented_packet(true)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    for drop in 0..lines.len() - 1 {
        let mut v = lines.clone();
        v.remove(drop);
        assert!(decode_augmented(&v.join("\n")).is_err(), "without line {drop}");
    }
    let bad_tag = text.replacen("tag=", "tag=zz", 1);
    assert!(matches!(decode_augmented(&bad_tag), Err(WireError::Malformed { line: 3, .. })));
}

fn label_cons(lo: u32, hi: u32) -> Vec<Constraint> {
    vec![
        Constraint::LabelPath(LabelConstraint::Geq(sl(lo))),
        Constraint::LabelPath(LabelConstraint::Leq(sl(hi))),
    ]
}

proptest! {
    #[test]
    fn merge_is_satisfiable_exactly_when_some_label_fits(
        a in 1u32..=5, b in 1u32..=5, c in 1u32..=5, d in 1u32..=5,
    ) {
        let local = label_cons(a.min(b), a.max(b));
        let recv = label_cons(c.min(d), c.max(d));
        let fits: Vec<u32> = (1..=5)
            .filter(|l| (a.min(b)..=a.max(b)).contains(l) && (c.min(d)..=c.max(d)).contains(l))
            .collect();
        match merge_constraints(&local, &recv) {
            Ok(m) => {
                prop_assert!(!fits.is_empty());
                for l in 1..=5 {
                    prop_assert_eq!(m.bounds.satisfies(sl(l)), fits.contains(&l));
                }
            }
            Err(_) => prop_assert!(fits.is_empty()),
        }
    }

    #[test]
    fn merge_keeps_non_label_constraints_once(rate in 1u32..100) {
        let local = vec![Constraint::RateThreshold(rate), Constraint::LabelPath(LabelConstraint::Geq(sl(2)))];
        let recv = vec![Constraint::RateThreshold(rate), Constraint::PacketAttr(PacketPredicate::Port(443))];
        let m = merge_constraints(&local, &recv).unwrap();
        prop_assert_eq!(
            m.constraints,
            vec![
                Constraint::LabelPath(LabelConstraint::Geq(sl(2))),
                Constraint::RateThreshold(rate),
                Constraint::PacketAttr(PacketPredicate::Port(443)),
            ]
        );
    }
}
