mod common;

use common::{oracle_match, random_ctx, random_pe, sl};
use pbsa::policy::expr::ConditionField;
use pbsa::policy::matching::{select, Selection};
use pbsa::{
    format_compact_pe, match_pe, parse_compact_pe, parse_label_constraint, parse_repository, select_policy,
    to_repository, Action, AsId, Decision, FlowContext, LabelConstraint, PolicyExpression,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn match_agrees_with_conjunction_oracle() {
    let mut r = rng(7);
    let mut hits = 0;
    for i in 0..10_000 {
        let ctx = random_ctx(&mut r);
        let pe = random_pe(&mut r, &ctx, i);
        let want = oracle_match(&pe, &ctx);
        assert_eq!(match_pe(&pe, &ctx), want, "pair {i}\n{pe:#?}\n{ctx:#?}");
        hits += usize::from(want);
    }
    // Both outcomes must be well represented for the comparison to mean anything.
    assert!((1_000..9_000).contains(&hits), "{hits} matches");
}

#[test]
fn empty_repository_denies_everything() {
    let mut r = rng(11);
    for _ in 0..10_000 {
        let d = select_policy(&[], &random_ctx(&mut r));
        assert_eq!(d, Decision::deny(None));
    }
}

#[test]
fn wildcarding_a_field_never_loses_a_match() {
    let mut r = rng(13);
    let mut checked = 0;
    for i in 0..5_000 {
        let ctx = random_ctx(&mut r);
        let pe = random_pe(&mut r, &ctx, i);
        if !match_pe(&pe, &ctx) {
            continue;
        }
        for f in ConditionField::ALL {
            assert!(match_pe(&pe.with_wildcard(f), &ctx), "{f:?} of {}", pe.id);
        }
        checked += 1;
    }
    assert!(checked > 500);
}

fn matching_deny(ctx: &FlowContext, r: &mut ChaCha8Rng) -> PolicyExpression {
    loop {
        let mut pe = random_pe(r, ctx, 99_999);
        pe.action = Action::Deny;
        if match_pe(&pe, ctx) {
            return pe;
        }
    }
}

#[test]
fn a_matching_deny_overrides_any_allow() {
    let mut r = rng(17);
    let mut flipped = 0;
    for _ in 0..2_000 {
        let ctx = random_ctx(&mut r);
        let mut repo: Vec<_> = (0..8).map(|i| random_pe(&mut r, &ctx, i)).collect();
        if !select_policy(&repo, &ctx).is_allow() {
            continue;
        }
        repo.push(matching_deny(&ctx, &mut r));
        let d = select_policy(&repo, &ctx);
        assert_eq!(d.verdict, Action::Deny);
        assert_eq!(d.path_obligation, None);
        flipped += 1;
    }
    assert!(flipped > 200);
}

#[test]
fn most_specific_allow_wins_then_smallest_id() {
    let mut r = rng(19);
    let mut compared = 0;
    for _ in 0..3_000 {
        let ctx = random_ctx(&mut r);
        let repo: Vec<_> = (0..10).map(|i| random_pe(&mut r, &ctx, i)).collect();
        let matching: Vec<&PolicyExpression> = repo.iter().filter(|p| oracle_match(p, &ctx)).collect();
        let denies = matching.iter().any(|p| p.action == Action::Deny);
        let mut allows: Vec<&PolicyExpression> =
            matching.iter().copied().filter(|p| p.action == Action::Allow).collect();
        allows.sort_by(|a, b| b.specificity().cmp(&a.specificity()).then(a.id.cmp(&b.id)));
        let got = select_policy(&repo, &ctx);
        match (denies, allows.first()) {
            (true, _) | (false, None) => assert!(!got.is_allow()),
            (false, Some(best)) => {
                assert_eq!(got.matched_pe.as_deref(), Some(best.id.as_str()));
                compared += 1;
            }
        }
    }
    assert!(compared > 300);
}

#[test]
fn specificity_nine_beats_five() {
    let mut ctx = random_ctx(&mut rng(23));
    ctx.user = Some("Alice".into());
    let mut five = PolicyExpression::wildcard("a-five", Action::Allow);
    five.flow_id = Some(ctx.flow_id.clone());
    five.source.host_ip = Some(ctx.src_ip);
    five.dest.host_ip = Some(ctx.dst_ip);
    five.source.host_mac = Some(ctx.src_mac);
    five.services = Some(vec![pbsa::PortRange::single(ctx.service_port)]);
    assert_eq!(five.specificity(), 5);
    let mut nine = five.clone();
    nine.id = "z-nine".into();
    nine.flow_cons = vec![pbsa::Constraint::PacketAttr(pbsa::PacketPredicate::Type(ctx.packet_type.clone()))];
    nine.dom_cons = vec![pbsa::Constraint::RateThreshold(10)];
    nine.sec_profile = Some(Default::default());
    nine.user = ctx.user.clone();
    assert_eq!(nine.specificity(), 9);
    let d = select_policy(&[five, nine], &ctx);
    assert_eq!(d.matched_pe.as_deref(), Some("z-nine"));
}

#[test]
fn selection_is_a_pure_function() {
    let mut r = rng(29);
    for _ in 0..500 {
        let ctx = random_ctx(&mut r);
        let repo: Vec<_> = (0..6).map(|i| random_pe(&mut r, &ctx, i)).collect();
        let a = select_policy(&repo, &ctx);
        let mut rev = repo.clone();
        rev.reverse();
        assert_eq!(a, select_policy(&repo, &ctx));
        // Input order does not influence the winner either.
        assert_eq!(a.matched_pe, select_policy(&rev, &ctx).matched_pe);
        if let Selection::NoMatch = select(&repo, &ctx) {
            assert!(!a.is_allow());
        }
    }
}

#[test]
fn both_formats_round_trip() {
    let mut r = rng(31);
    for i in 0..2_000 {
        let ctx = random_ctx(&mut r);
        let mut pe = random_pe(&mut r, &ctx, i);
        // Subnet descriptors travel as their network address.
        for sel in [&mut pe.source, &mut pe.dest] {
            if let Some(c) = sel.subnet {
                sel.subnet = pbsa::Ipv4Cidr::new(c.network(), c.prefix());
            }
        }
        let text = format_compact_pe(&pe);
        let back = parse_compact_pe(&text).unwrap_or_else(|e| panic!("{text}: {e}"));
        assert_eq!(back, pe, "{text}");
        let doc = to_repository(std::slice::from_ref(&pe));
        let back = parse_repository(&doc).unwrap_or_else(|e| panic!("{doc}: {e}"));
        assert_eq!(back, vec![pe], "{doc}");
        let again = parse_compact_pe(&format_compact_pe(&back[0])).unwrap();
        assert_eq!(again, back[0]);
    }
}

fn descriptor(s: &pbsa::harness::Scenario, id: &str) -> pbsa::AsDescriptor {
    let d = s.domain(id).unwrap();
    pbsa::AsDescriptor {
        id: d.id.clone(),
        subnet: d.subnet,
        as_type: d.as_type.clone(),
        label: d.label,
    }
}

// The AS3 row of the four-domain example, evaluated against a context toggled field by field.
#[test]
fn table1_transit_row_field_toggles() {
    let s = common::load("fig3_interdomain.json");
    let pe = s
        .domain("AS3")
        .unwrap()
        .resolved
        .iter()
        .find(|p| p.id == "PE_2")
        .unwrap()
        .clone();
    let asd = |id| descriptor(&s, id);
    let mut ctx = FlowContext {
        flow_id: "10.0.0.2:40000>192.168.52.72:443/tcp".into(),
        src_as: Some(asd("AS1")),
        dst_as: Some(asd("AS4")),
        src_ip: "10.0.0.2".parse().unwrap(),
        dst_ip: "192.168.52.72".parse().unwrap(),
        src_mac: "0b:3b:5c:2a:9d:e1".parse().unwrap(),
        dst_mac: None,
        user: None,
        service_port: 443,
        packet_type: "HTTPS".parse().unwrap(),
        timestamp: 0,
        traversed_path: common::ids(&["AS1", "AS2"]),
        ingress_switch: Some("3SW2".into()),
        signature: None,
    };
    assert!(match_pe(&pe, &ctx));
    assert_eq!(match_pe(&pe, &ctx), oracle_match(&pe, &ctx));
    for f in ConditionField::ALL {
        let toggled = pe.with_wildcard(f);
        assert_eq!(match_pe(&toggled, &ctx), oracle_match(&toggled, &ctx), "{f:?}");
    }
    ctx.service_port = 22;
    assert!(!match_pe(&pe, &ctx));
    for f in ConditionField::ALL {
        let toggled = pe.with_wildcard(f);
        let want = oracle_match(&toggled, &ctx);
        assert_eq!(match_pe(&toggled, &ctx), want, "{f:?}");
        assert_eq!(want, f == ConditionField::Services, "{f:?}");
    }
}

#[test]
fn table1_source_row_exits_through_1sw2() {
    let s = common::load("fig3_interdomain.json");
    let repo = &s.domain("AS1").unwrap().resolved;
    let d = repo.iter().find(|p| p.id == "PE_1").unwrap();
    assert_eq!(d.action, Action::Allow);
    let ctx = FlowContext {
        flow_id: "x".into(),
        src_as: Some(descriptor(&s, "AS1")),
        dst_as: Some(descriptor(&s, "AS4")),
        src_ip: "10.0.0.2".parse().unwrap(),
        dst_ip: "192.168.52.72".parse().unwrap(),
        src_mac: "0b:3b:5c:2a:9d:e1".parse().unwrap(),
        dst_mac: None,
        user: None,
        service_port: 443,
        packet_type: "HTTPS".parse().unwrap(),
        timestamp: 0,
        traversed_path: vec![],
        ingress_switch: Some("AS1-SW1".into()),
        signature: None,
    };
    let decision = select_policy(repo, &ctx);
    assert_eq!(decision.matched_pe.as_deref(), Some("PE_1"));
    assert_eq!(decision.exit_obligation, Some("1SW2".into()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn label_relations_follow_rank_order(base in 1u32..=10, seen in 1u32..=10) {
        let b = sl(base);
        let l = sl(seen);
        prop_assert_eq!(parse_label_constraint(&format!("SL{base}+=")).unwrap(), LabelConstraint::Geq(b));
        prop_assert_eq!(LabelConstraint::Geq(b).satisfies(l), seen >= base);
        prop_assert_eq!(LabelConstraint::Leq(b).satisfies(l), seen <= base);
        prop_assert_eq!(LabelConstraint::Eq(b).satisfies(l), seen == base);
        prop_assert!(LabelConstraint::Eq(l).satisfies(l));
    }

    #[test]
    fn unknown_fields_never_panic(text in "<[ -~]{0,80}>:<[A-Za-z]{0,8}>") {
        let _ = parse_compact_pe(&text);
    }

    #[test]
    fn compact_text_with_wrong_field_count_is_rejected(n in 0usize..30) {
        prop_assume!(n != 13);
        let fields = vec!["*"; n].join(", ");
        let err = parse_compact_pe(&format!("<{fields}>:<Allow>")).unwrap_err().to_string();
        prop_assert!(err.contains("13"), "{}", err);
    }
}

#[test]
fn as_id_path_condition_is_exact_sequence() {
    let mut pe = PolicyExpression::wildcard("p", Action::Allow);
    pe.path = Some(pbsa::PathSpec::As(common::ids(&["AS1", "AS2"])));
    let mut ctx = random_ctx(&mut rng(37));
    for (visited, want) in [
        (vec!["AS1", "AS2"], true),
        (vec!["AS2", "AS1"], false),
        (vec!["AS1"], false),
        (vec!["AS1", "AS2", "AS3"], false),
    ] {
        ctx.traversed_path = visited.iter().map(|s| AsId::from(*s)).collect();
        assert_eq!(match_pe(&pe, &ctx), want, "{visited:?}");
    }
}
