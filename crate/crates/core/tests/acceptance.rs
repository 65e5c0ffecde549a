//! Release gate. Runs every primary acceptance check and prints one PASS or
//! FAIL line per check; exits nonzero if any fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{ids, load, oracle_match, random_as_map, random_ctx, random_pe, run_variant, switches};
use num_rational::Ratio;
use pbsa::controller::DropReason;
use pbsa::defense::{compute_thresholds, CapacityModel, CrossingScope};
use pbsa::harness::{emit, run, run_variants, sweep, Axis, EmitFormat, MetricsReport, Scenario, Sim, SweepPoint};
use pbsa::interdomain::{Handle, KeyRing};
use pbsa::policy::expr::ConditionField;
use pbsa::topology::find_as_paths;
use pbsa::{match_pe, select_policy, Action, AsId, Decision, LabelConstraint, SwitchId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(limit: Duration, start: Instant) -> Check {
    let t = start.elapsed();
    ensure!(t < limit, "took {t:?}, limit {limit:?}");
    Ok(())
}

fn rank_of(s: &Scenario) -> impl Fn(&SwitchId) -> u32 + '_ {
    move |id| {
        s.domains
            .iter()
            .flat_map(|d| &d.switches)
            .find(|w| &w.id == id)
            .map_or(0, |w| w.label.rank())
    }
}

fn fig5() -> Check {
    let start = Instant::now();
    let s = load("fig5_intra.json");
    let mut sim = Sim::new(&s).map_err(|e| e.to_string())?;
    let r = sim.run();
    let path = |label: &str| r.flows_labeled(label).next().map(|f| f.switch_path.clone());
    ensure!(path("http") == Some(switches(&["SW1", "SW5", "SW4"])), "http path {:?}", path("http"));
    ensure!(path("ftp") == Some(switches(&["SW1", "SW3", "SW4"])), "ftp path {:?}", path("ftp"));
    let dump = sim.switch("SW5").ok_or("no SW5")?.render_dump();
    let golden = std::fs::read_to_string(common::scenario_path("golden/fig5_sw5.flows")).map_err(|e| e.to_string())?;
    ensure!(dump == golden, "SW5 dump differs:\n{dump}");
    ensure!(dump.lines().count() == 3, "SW5 has {} rules", dump.lines().count());
    within(Duration::from_secs(1), start)
}

fn fig3() -> Check {
    let start = Instant::now();
    let s = load("fig3_interdomain.json");
    let r = run_variant(&s, "all");
    let f = r.flows_labeled("web").next().ok_or("no web flow")?;
    ensure!(f.packets > 0 && f.delivered == f.packets, "delivered {}/{}", f.delivered, f.packets);
    let want = ids(&["AS1", "AS2", "AS3", "AS4"]);
    ensure!(f.handle_visited.as_ref() == Some(&want), "visited {:?}", f.handle_visited);
    let rank = rank_of(&s);
    for d in s.domains.iter().filter(|d| matches!(d.id.as_str(), "AS2" | "AS3")) {
        ensure!(d.label.rank() >= 2, "{} is {}", d.id, d.label);
        for sw in f.switch_path.iter().filter(|sw| d.switches.iter().any(|w| &w.id == *sw)) {
            ensure!(rank(sw) >= 2, "transit switch {sw} below SL2");
        }
    }
    for (variant, domain) in [
        ("without-AS1-PE_1", "AS1"),
        ("without-AS2-PE_4", "AS2"),
        ("without-AS3-PE_2", "AS3"),
        ("without-AS4-PE_2", "AS4"),
    ] {
        let r = run_variant(&s, variant);
        ensure!(r.delivered == 0, "{variant}: {} delivered", r.delivered);
        let at = AsId::from(domain);
        ensure!(
            r.packets.iter().all(|p| p.outcome == Some(DropReason::Policy) && p.dropped_at.as_ref() == Some(&at)),
            "{variant}: not all dropped by policy at {domain}"
        );
    }
    within(Duration::from_secs(1), start)
}

fn alice() -> Check {
    let s = load("alice_byod.json");
    let without = run_variant(&s, "without-PE_8");
    ensure!(without.delivered == 0, "delivered {} without PE_8", without.delivered);
    let as2 = AsId::from("AS2");
    ensure!(
        without.packets.iter().all(|p| p.dropped_at.as_ref() == Some(&as2)),
        "drop not at AS2"
    );
    let n = without.rules_installed.get(&as2).copied().unwrap_or(0);
    ensure!(n == 0, "{n} rules installed in AS2");
    let with = run_variant(&s, "with-PE_8");
    ensure!(with.offered > 0 && with.delivered == with.offered, "with PE_8: {}/{}", with.delivered, with.offered);
    Ok(())
}

fn unknown_transit() -> Check {
    let s = load("unknown_transit.json");
    let r = run(&s).map_err(|e| e.to_string())?;
    let rank = rank_of(&s);
    let as4 = s.domains.iter().find(|d| d.id.as_str() == "AS4").ok_or("no AS4")?;
    let mut unknown: BTreeSet<SwitchId> = BTreeSet::new();
    let mut protected: BTreeSet<SwitchId> = BTreeSet::new();
    let mut n_unknown = 0;
    for f in &r.flows {
        let core = f.switch_path.iter().cloned();
        match f.label.as_deref() {
            Some("unknown") => {
                ensure!(f.packets > 0 && f.delivered == f.packets, "unknown flow {} not delivered", f.flow);
                ensure!(as4.subnet.contains(f.dst), "{} does not target AS4", f.flow);
                unknown.extend(core);
                n_unknown += 1;
            }
            Some("protected") => protected.extend(core),
            _ => {}
        }
    }
    ensure!(n_unknown > 0, "no unknown flows");
    let high: Vec<_> = unknown.iter().filter(|s| rank(s) != 1).collect();
    ensure!(high.is_empty(), "unknown flows used {high:?}");
    let shared: Vec<_> = unknown.intersection(&protected).collect();
    ensure!(shared.is_empty(), "shared switches {shared:?}");
    Ok(())
}

fn thresholds() -> Check {
    let t = compute_thresholds(&CapacityModel { cc: 1000, x: 10, y: 10, cs: None }).map_err(|e| e.to_string())?;
    ensure!(
        t.tsw == Ratio::from_integer(100) && t.thost == Ratio::from_integer(10),
        "worked example gave ({}, {})",
        t.tsw,
        t.thost
    );
    let mut r = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let (cc, x, y) = (r.gen_range(1..1_000_000u64), r.gen_range(1..1000u64), r.gen_range(1..1000u64));
        let t = compute_thresholds(&CapacityModel { cc, x, y, cs: None }).map_err(|e| e.to_string())?;
        ensure!(t.tsw == Ratio::new(cc, x), "TSw({cc},{x})");
        ensure!(t.thost == Ratio::new(cc, x) / Ratio::from_integer(y), "Thost({cc},{x},{y})");
    }
    Ok(())
}

fn flooding() -> Check {
    const RATES: [f64; 5] = [1000.0, 2000.0, 3000.0, 4000.0, 5000.0];
    let s = load("flooding.json");
    let cap = s.defense.as_ref().ok_or("no defense section")?.capacity;
    let window = s.defense.as_ref().unwrap().window;
    let t = compute_thresholds(&cap).map_err(|e| e.to_string())?.host_budget();
    let pts = sweep(&s, Axis::RequestRate, &RATES).map_err(|e| e.to_string())?;
    let series = |name: &str| -> Vec<&SweepPoint> { pts.iter().filter(|p| p.variant == name).collect() };
    let attacker = |r: &MetricsReport| -> usize {
        r.installs.iter().filter(|i| !i.defense && i.src_host.as_ref().is_some_and(|h| h.as_str() == "attacker")).count()
    };

    let base: Vec<usize> = series("baseline").iter().map(|p| p.report.flow_installs()).collect();
    ensure!(base.len() == 5 && base.windows(2).all(|w| w[0] < w[1]), "baseline installs {base:?}");

    for p in series("threshold").iter().filter(|p| p.value > t as f64) {
        let per_window = p.report.installs_per_window(window);
        let windows: Vec<_> = per_window.iter().filter(|((h, _), _)| h.as_str() == "attacker").collect();
        ensure!(!windows.is_empty(), "no attacker installs at {}", p.value);
        for ((_, w), n) in windows {
            ensure!(*n as u64 == t, "throttle admitted {n} in window {w} at rate {}, T={t}", p.value);
        }
    }

    for p in series("drop-rule") {
        let r = &p.report;
        let detected = r
            .crossings
            .iter()
            .filter(|c| c.crossing.scope == CrossingScope::Host)
            .map(|c| c.crossing.tick)
            .min();
        let total = r
            .installs
            .iter()
            .filter(|i| i.src_host.as_ref().is_some_and(|h| h.as_str() == "attacker"))
            .count() as u64;
        ensure!(total <= t + 1, "attacker caused {total} installs at {}, budget {t}", p.value);
        if let Some(d) = detected {
            let after = r
                .installs
                .iter()
                .filter(|i| !i.defense && i.tick > d && i.src_host.as_ref().is_some_and(|h| h.as_str() == "attacker"))
                .count();
            ensure!(after == 0, "{after} attacker installs after detection at {}", p.value);
        } else {
            ensure!(p.value <= t as f64, "no detection at rate {}", p.value);
            ensure!(attacker(r) as u64 <= t, "undetected attacker installs above budget");
        }
    }

    let legit = |p: &SweepPoint| -> (usize, usize) {
        let pk: Vec<_> = p.report.packets_labeled("legit").collect();
        (pk.iter().filter(|x| x.delivered()).count(), pk.len())
    };
    for rate in RATES {
        let at: Vec<(usize, usize)> = pts.iter().filter(|p| p.value == rate).map(legit).collect();
        ensure!(at.len() == 3, "missing series at {rate}");
        ensure!(at.iter().all(|x| *x == at[0] && x.0 == x.1), "legit delivery at {rate}: {at:?}");
    }
    Ok(())
}

fn sweep_trends() -> Check {
    let s = load("sweep_switches.json");
    let pts = sweep(&s, Axis::SwitchCount, &[2.0, 4.0, 6.0, 8.0, 10.0]).map_err(|e| e.to_string())?;
    let lat = |name: &str| -> Vec<f64> {
        pts.iter().filter(|p| p.variant == name).map(|p| p.report.mean_latency()).collect()
    };
    let (with, without) = (lat("pbsa"), lat("baseline"));
    ensure!(with.len() == 5 && without.len() == 5, "sweep incomplete");
    ensure!(with.iter().zip(&without).all(|(a, b)| a > b), "pbsa {with:?} vs baseline {without:?}");
    ensure!(with.windows(2).all(|w| w[0] <= w[1]), "pbsa latency not nondecreasing: {with:?}");

    let s = load("sweep_pe.json");
    let pts = sweep(&s, Axis::PeCount, &[100.0, 200.0, 300.0, 400.0, 500.0]).map_err(|e| e.to_string())?;
    let est: Vec<usize> = pts.iter().map(|p| p.report.established()).collect();
    ensure!(est.windows(2).all(|w| w[0] > w[1]), "established {est:?}");

    let s = load("sweep_domains.json");
    let pts = sweep(&s, Axis::AsCount, &[1.0, 2.0, 3.0, 4.0]).map_err(|e| e.to_string())?;
    let e2e: Vec<f64> = pts.iter().map(|p| p.report.mean_establishment()).collect();
    ensure!(pts.iter().all(|p| p.report.established() > 0), "unestablished flow in {e2e:?}");
    ensure!(e2e.windows(2).all(|w| w[0] <= w[1]), "establishment ticks {e2e:?}");
    Ok(())
}

fn key(id: &str) -> KeyRing {
    let mut k = KeyRing::new(id.into(), format!("k-{id}").into_bytes());
    for p in ["AS1", "AS2", "AS3", "AS4"] {
        if p != id {
            k.add_peer(p.into(), format!("k-{p}").into_bytes());
        }
    }
    k
}

fn property_suites() -> Check {
    let mut r = ChaCha8Rng::seed_from_u64(99);
    for i in 0..10_000 {
        let ctx = random_ctx(&mut r);
        ensure!(select_policy(&[], &ctx) == Decision::deny(None), "empty repo allowed context {i}");
    }
    let mut agree = 0;
    for i in 0..10_000 {
        let ctx = random_ctx(&mut r);
        let pe = random_pe(&mut r, &ctx, i);
        let m = match_pe(&pe, &ctx);
        agree += usize::from(m == oracle_match(&pe, &ctx));
        if m {
            for f in ConditionField::ALL {
                ensure!(match_pe(&pe.with_wildcard(f), &ctx), "wildcarding {f:?} lost a match");
            }
        }
    }
    ensure!(agree == 10_000, "match_pe agreed on {agree}/10000");
    for _ in 0..2_000 {
        let ctx = random_ctx(&mut r);
        let mut repo: Vec<_> = (0..6).map(|i| random_pe(&mut r, &ctx, i)).collect();
        let deny = loop {
            let mut d = random_pe(&mut r, &ctx, 100);
            d.action = Action::Deny;
            if match_pe(&d, &ctx) {
                break d;
            }
        };
        repo.push(deny);
        ensure!(!select_policy(&repo, &ctx).is_allow(), "a matching deny was overridden");
    }

    let flow = "f";
    let h = Handle::create(&key("AS1"), flow).extend(&key("AS2")).extend(&key("AS3"));
    let check = |h: &Handle| h.validate(&key("AS4"), |a| a.as_str() == "AS3", flow);
    ensure!(check(&h).is_ok(), "clean handle rejected");
    let mut mutants: Vec<Handle> = Vec::new();
    for bit in 0..256 {
        let mut m = h.clone();
        m.tag[bit / 8] ^= 1 << (bit % 8);
        mutants.push(m);
    }
    let edits: [fn(&mut Handle); 8] = [
        |m| m.visited.reverse(),
        |m| drop(m.visited.remove(0)),
        |m| drop(m.visited.remove(1)),
        |m| m.visited.push("AS9".into()),
        |m| m.visited.insert(1, "AS3".into()),
        |m| m.visited.clear(),
        |m| m.origin = "AS2".into(),
        |m| m.flow_id.push('!'),
    ];
    for e in edits {
        let mut m = h.clone();
        e(&mut m);
        mutants.push(m);
    }
    ensure!(mutants.iter().all(|m| check(m).is_err()), "a tampered handle validated");

    let mut nonempty = 0;
    for _ in 0..500 {
        let m = random_as_map(&mut r, 6, 0.45);
        let src = AsId::from(format!("AS{}", r.gen_range(1..=6)));
        let dst = AsId::from(format!("AS{}", r.gen_range(1..=6)));
        if src == dst {
            continue;
        }
        let floor = r.gen_range(1..=4);
        let got: BTreeSet<Vec<AsId>> = find_as_paths(&m, &src, &dst, LabelConstraint::Geq(common::sl(floor)))
            .into_iter()
            .collect();
        let want = common::brute_force_paths(&m.adjacency, &src, &dst, &|a| m.labels[a].rank() >= floor);
        ensure!(got == want, "path filter disagrees for {src}->{dst} floor {floor}");
        nonempty += usize::from(!want.is_empty());
    }
    ensure!(nonempty > 50, "too few connected cases ({nonempty})");

    for name in ["fig3_interdomain.json", "flooding.json"] {
        let s = load(name);
        let a: Vec<String> = run_variants(&s).map_err(|e| e.to_string())?.iter().map(|r| emit(r, EmitFormat::Records)).collect();
        let b: Vec<String> = run_variants(&s).map_err(|e| e.to_string())?.iter().map(|r| emit(r, EmitFormat::Records)).collect();
        ensure!(a == b, "{name} reruns differ");
    }
    Ok(())
}

fn main() {
    let checks: [(&str, fn() -> Check); 8] = [
        ("fig5 intra-domain paths and SW5 table", fig5),
        ("fig3 inter-domain handle, labels and removals", fig3),
        ("alice BYOD expression in AS2", alice),
        ("unknown transit on SL1 switches only", unknown_transit),
        ("threshold arithmetic", thresholds),
        ("flooding response shape", flooding),
        ("sweep trends", sweep_trends),
        ("property suites and determinism", property_suites),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (i, (name, f)) in checks.iter().enumerate() {
        let t = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let ms = t.elapsed().as_millis();
        match res {
            Ok(()) => println!("PASS {}: {name} ({ms} ms)", i + 1),
            Err(e) => {
                failed += 1;
                println!("FAIL {}: {name} ({ms} ms): {e}", i + 1);
            }
        }
    }
    let total = start.elapsed();
    if total < Duration::from_secs(60) {
        println!("PASS total runtime {:.1} s under 60 s", total.as_secs_f64());
    } else {
        failed += 1;
        println!("FAIL total runtime {:.1} s exceeds 60 s", total.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
