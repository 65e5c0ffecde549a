//! Run reports and their text renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::scenario::Mode;
use crate::controller::{ControllerEvent, DropReason, SecurityEvent};
use crate::defense::Crossing;
use crate::ids::{AsId, HostId, SwitchId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub id: u64,
    pub flow: String,
    pub label: Option<String>,
    pub src: HostId,
    pub dst: Ipv4Addr,
    pub sent: u64,
    /// Tick of delivery or drop.
    pub done: u64,
    /// `None` when delivered.
    pub outcome: Option<DropReason>,
    pub dropped_at: Option<AsId>,
    pub switch_path: Vec<SwitchId>,
    pub as_path: Vec<AsId>,
}

impl PacketRecord {
    pub fn delivered(&self) -> bool {
        self.outcome.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub flow: String,
    pub label: Option<String>,
    pub src: HostId,
    pub dst: Ipv4Addr,
    pub first_sent: u64,
    pub packets: u64,
    pub delivered: u64,
    /// Tick the first packet was delivered.
    pub established: Option<u64>,
    pub establishment_ticks: Option<u64>,
    /// Path of the first delivered packet.
    pub switch_path: Vec<SwitchId>,
    pub as_path: Vec<AsId>,
    /// Handle as accepted by the destination domain.
    pub handle_visited: Option<Vec<AsId>>,
    /// Drop reason of the flow's first packet if none was delivered.
    pub outcome: Option<DropReason>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstallRecord {
    pub tick: u64,
    pub domain: AsId,
    pub switch: SwitchId,
    pub in_port: u32,
    pub src_ip: Ipv4Addr,
    pub src_host: Option<HostId>,
    pub flow: String,
    pub provenance: String,
    pub rules: usize,
    pub defense: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainCrossing {
    pub domain: AsId,
    #[serde(flatten)]
    pub crossing: Crossing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchStats {
    pub domain: AsId,
    pub offered: u64,
    pub packet_ins: u64,
    pub drops: u64,
    pub evictions: u64,
    pub rule_packets: u64,
    pub rules: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub variant: String,
    pub mode: Mode,
    pub pbsa: bool,
    pub seed: u64,
    pub offered: u64,
    pub delivered: u64,
    pub drops: BTreeMap<DropReason, u64>,
    pub packets: Vec<PacketRecord>,
    pub flows: Vec<FlowRecord>,
    pub packet_ins: Vec<ControllerEvent>,
    pub installs: Vec<InstallRecord>,
    pub crossings: Vec<DomainCrossing>,
    pub security: Vec<SecurityEvent>,
    /// Rules pushed per domain, discovery rules excluded.
    pub rules_installed: BTreeMap<AsId, u64>,
    pub switches: BTreeMap<SwitchId, SwitchStats>,
    pub end_tick: u64,
}

impl MetricsReport {
    pub fn dropped(&self) -> u64 {
        self.drops.values().sum()
    }

    pub fn drop_count(&self, reason: DropReason) -> u64 {
        self.drops.get(&reason).copied().unwrap_or(0)
    }

    pub fn mean_latency(&self) -> f64 {
        mean(self.packet_ins.iter().map(|e| e.latency))
    }

    pub fn max_latency(&self) -> u64 {
        self.packet_ins.iter().map(|e| e.latency).max().unwrap_or(0)
    }

    /// Forwarding installs, defense block rules excluded.
    pub fn flow_installs(&self) -> usize {
        self.installs.iter().filter(|i| !i.defense).count()
    }

    /// Flows with at least one delivered packet.
    pub fn established(&self) -> usize {
        self.flows.iter().filter(|f| f.established.is_some()).count()
    }

    pub fn mean_establishment(&self) -> f64 {
        mean(self.flows.iter().filter_map(|f| f.establishment_ticks))
    }

    pub fn flows_labeled<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a FlowRecord> + 'a {
        self.flows.iter().filter(move |f| f.label.as_deref() == Some(label))
    }

    pub fn packets_labeled<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a PacketRecord> + 'a {
        self.packets.iter().filter(move |p| p.label.as_deref() == Some(label))
    }

    /// Forwarding installs per (source host, window index).
    pub fn installs_per_window(&self, window: u64) -> BTreeMap<(HostId, u64), usize> {
        let mut out = BTreeMap::new();
        for i in self.installs.iter().filter(|i| !i.defense) {
            if let Some(h) = &i.src_host {
                *out.entry((h.clone(), i.tick / window.max(1))).or_default() += 1;
            }
        }
        out
    }

    pub fn summary(&self, series: &str, axis: &str, value: &str) -> SummaryRow {
        SummaryRow {
            series: series.to_string(),
            axis: axis.to_string(),
            value: value.to_string(),
            offered: self.offered,
            delivered: self.delivered,
            dropped: self.dropped(),
            packet_ins: self.packet_ins.len() as u64,
            mean_latency: round3(self.mean_latency()),
            max_latency: self.max_latency(),
            installs: self.flow_installs() as u64,
            established: self.established() as u64,
            mean_establishment: round3(self.mean_establishment()),
        }
    }

    /// Series name for delimited output.
    pub fn series(&self) -> String {
        if self.variant.is_empty() || self.variant == "default" {
            self.scenario.clone()
        } else {
            self.variant.clone()
        }
    }
}

fn mean(it: impl Iterator<Item = u64>) -> f64 {
    let (n, sum) = it.fold((0u64, 0u64), |(n, s), x| (n + 1, s + x));
    if n == 0 {
        0.0
    } else {
        sum as f64 / n as f64
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// One delimited row; the column order is the field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub series: String,
    pub axis: String,
    pub value: String,
    pub offered: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub packet_ins: u64,
    pub mean_latency: f64,
    pub max_latency: u64,
    pub installs: u64,
    pub established: u64,
    pub mean_establishment: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmitFormat {
    #[default]
    Table,
    Delimited,
    Records,
}

impl std::str::FromStr for EmitFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "table" => Ok(EmitFormat::Table),
            "delimited" | "csv" => Ok(EmitFormat::Delimited),
            "records" | "jsonl" => Ok(EmitFormat::Records),
            _ => Err(format!("unknown format `{s}` (table, delimited, records)")),
        }
    }
}

/// A labelled report, as produced by runs over variants or sweep points.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeled<'a> {
    pub axis: &'a str,
    pub value: String,
    pub report: &'a MetricsReport,
}

pub fn write_rows(rows: &[SummaryRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record([
            "series",
            "axis",
            "value",
            "offered",
            "delivered",
            "dropped",
            "packet_ins",
            "mean_latency",
            "max_latency",
            "installs",
            "established",
            "mean_establishment",
        ])
        .expect("in-memory write");
    }
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record<'a> {
    Summary(&'a SummaryRow),
    Packet {
        series: &'a str,
        #[serde(flatten)]
        p: &'a PacketRecord,
    },
    Flow {
        series: &'a str,
        #[serde(flatten)]
        f: &'a FlowRecord,
    },
    PacketIn {
        series: &'a str,
        #[serde(flatten)]
        e: &'a ControllerEvent,
    },
    Install {
        series: &'a str,
        #[serde(flatten)]
        i: &'a InstallRecord,
    },
    Crossing {
        series: &'a str,
        #[serde(flatten)]
        c: &'a DomainCrossing,
    },
    Security {
        series: &'a str,
        #[serde(flatten)]
        s: &'a SecurityEvent,
    },
}

fn line(out: &mut String, r: &Record<'_>) {
    out.push_str(&serde_json::to_string(r).expect("records serialize"));
    out.push('\n');
}

/// Renders labelled reports. Each report contributes one summary row
/// (delimited), a block (table), or its full record stream (records).
pub fn emit_all(items: &[Labeled<'_>], format: EmitFormat) -> String {
    let rows: Vec<SummaryRow> = items
        .iter()
        .map(|l| l.report.summary(&l.report.series(), l.axis, &l.value))
        .collect();
    match format {
        EmitFormat::Delimited => write_rows(&rows),
        EmitFormat::Table => {
            let mut out = String::new();
            for (l, row) in items.iter().zip(&rows) {
                render_table(&mut out, l.report, row);
            }
            out
        }
        EmitFormat::Records => {
            let mut out = String::new();
            for (l, row) in items.iter().zip(&rows) {
                let series = row.series.as_str();
                let r = l.report;
                line(&mut out, &Record::Summary(row));
                for p in &r.packets {
                    line(&mut out, &Record::Packet { series, p });
                }
                for f in &r.flows {
                    line(&mut out, &Record::Flow { series, f });
                }
                for e in &r.packet_ins {
                    line(&mut out, &Record::PacketIn { series, e });
                }
                for i in &r.installs {
                    line(&mut out, &Record::Install { series, i });
                }
                for c in &r.crossings {
                    line(&mut out, &Record::Crossing { series, c });
                }
                for s in &r.security {
                    line(&mut out, &Record::Security { series, s });
                }
            }
            out
        }
    }
}

pub fn emit(report: &MetricsReport, format: EmitFormat) -> String {
    emit_all(
        &[Labeled {
            axis: "-",
            value: "-".into(),
            report,
        }],
        format,
    )
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    if v.is_empty() {
        return "-".into();
    }
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn render_table(out: &mut String, r: &MetricsReport, row: &SummaryRow) {
    let _ = writeln!(
        out,
        "== {} [{}] mode={} pbsa={} seed={}",
        r.scenario, r.variant, r.mode, r.pbsa, r.seed
    );
    let _ = writeln!(
        out,
        "offered {}  delivered {}  dropped {}  packet_ins {}  installs {}  end_tick {}",
        r.offered,
        r.delivered,
        r.dropped(),
        row.packet_ins,
        row.installs,
        r.end_tick
    );
    if !r.drops.is_empty() {
        let parts: Vec<String> = r.drops.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(out, "drops: {}", parts.join(" "));
    }
    let _ = writeln!(
        out,
        "latency ticks: mean {:.3} max {}  establishment ticks: mean {:.3}",
        row.mean_latency, row.max_latency, row.mean_establishment
    );
    let _ = writeln!(
        out,
        "{:<12} {:<44} {:>5} {:>5} {:<14} {:<24} switch path",
        "label", "flow", "sent", "deliv", "outcome", "as path"
    );
    const LIMIT: usize = 40;
    for f in r.flows.iter().take(LIMIT) {
        let outcome = match (f.delivered, f.outcome) {
            (0, Some(reason)) => reason.to_string(),
            (0, None) => "-".to_string(),
            _ => "delivered".to_string(),
        };
        let _ = writeln!(
            out,
            "{:<12} {:<44} {:>5} {:>5} {:<14} {:<24} {}",
            f.label.as_deref().unwrap_or("-"),
            f.flow,
            f.packets,
            f.delivered,
            outcome,
            join(&f.as_path),
            join(&f.switch_path)
        );
    }
    if r.flows.len() > LIMIT {
        let _ = writeln!(out, "... {} more flows", r.flows.len() - LIMIT);
    }
    for c in &r.crossings {
        let _ = writeln!(
            out,
            "crossing {} t={} {:?} {} observed {:.1} threshold {:.1}",
            c.domain, c.crossing.tick, c.crossing.scope, c.crossing.offender, c.crossing.observed, c.crossing.threshold
        );
    }
    for s in &r.security {
        let _ = writeln!(out, "security {} t={} {}: {}", s.domain, s.tick, s.flow, s.detail);
    }
    out.push('\n');
}
