//! Line-oriented text encoding of a packet and its augmentation.
//!
//! ```text
//! pbsa-augmented/1
//! packet id=7 src=10.0.0.2 dst=192.168.52.72 smac=00:00:00:00:00:01 dmac=- kind=HTTPS sport=40000 dport=443 size=512 ts=0 sig=-
//! handle flow=<flow id> origin=AS1 visited=AS1,AS2 tag=<64 hex digits>
//! ptt flow=<flow id> origin=AS1 issuer=AS2 cons=SL2+=;rate<=5 tag=<64 hex digits>
//! ```
//!
//! Keys appear in exactly this order, separated by single spaces. `-` marks
//! an absent optional value. The `ptt` line is omitted when there is no
//! token. Tags cover the canonical strings of [`Handle::canonical`] and
//! [`PolicyTransferToken::canonical`], not these lines.

use std::net::Ipv4Addr;

use thiserror::Error;

use super::handle::{parse_tag, AugmentedHeader, Handle, PolicyTransferToken};
use crate::dataplane::Packet;
use crate::ids::AsId;
use crate::policy::expr::{parse_constraint_token, ConstraintToken};
use crate::policy::{Constraint, MacAddr};

pub const WIRE_MAGIC: &str = "pbsa-augmented/1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("packet carries no augmentation")]
    NotAugmented,
}

pub fn encode_augmented(p: &Packet) -> Result<String, WireError> {
    let aug = p.augmentation.as_ref().ok_or(WireError::NotAugmented)?;
    let mut out = String::new();
    out.push_str(WIRE_MAGIC);
    out.push('\n');
    out.push_str(&format!(
        "packet id={} src={} dst={} smac={} dmac={} kind={} sport={} dport={} size={} ts={} sig={}\n",
        p.id,
        p.src_ip,
        p.dst_ip,
        p.src_mac,
        p.dst_mac.map_or("-".to_string(), |m| m.to_string()),
        p.kind,
        p.tp_src,
        p.tp_dst,
        p.size,
        p.timestamp,
        p.signature.as_deref().unwrap_or("-"),
    ));
    out.push_str(&aug.handle.to_string());
    out.push('\n');
    if let Some(t) = &aug.ptt {
        out.push_str(&t.to_string());
        out.push('\n');
    }
    Ok(out)
}

struct Fields<'a> {
    line: usize,
    items: std::str::SplitAsciiWhitespace<'a>,
}

impl<'a> Fields<'a> {
    fn new(line: usize, text: &'a str, head: &str) -> Result<Self, WireError> {
        let mut items = text.split_ascii_whitespace();
        if items.next() != Some(head) {
            return Err(malformed(line, format!("expected `{head}` line")));
        }
        Ok(Self { line, items })
    }

    fn take(&mut self, key: &str) -> Result<&'a str, WireError> {
        let item = self
            .items
            .next()
            .ok_or_else(|| malformed(self.line, format!("missing `{key}`")))?;
        item.strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| malformed(self.line, format!("expected `{key}=`, found `{item}`")))
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, WireError> {
        let v = self.take(key)?;
        v.parse()
            .map_err(|_| malformed(self.line, format!("bad value for `{key}`: `{v}`")))
    }

    fn finish(mut self) -> Result<(), WireError> {
        match self.items.next() {
            None => Ok(()),
            Some(extra) => Err(malformed(self.line, format!("unexpected `{extra}`"))),
        }
    }
}

fn malformed(line: usize, reason: String) -> WireError {
    WireError::Malformed { line, reason }
}

fn opt(v: &str) -> Option<&str> {
    (v != "-").then_some(v)
}

fn ids(line: usize, v: &str) -> Result<Vec<AsId>, WireError> {
    if v.is_empty() {
        return Err(malformed(line, "empty domain list".into()));
    }
    Ok(v.split(',').map(AsId::from).collect())
}

fn tag(line: usize, v: &str) -> Result<[u8; 32], WireError> {
    parse_tag(v).ok_or_else(|| malformed(line, format!("bad tag `{v}`")))
}

fn constraints(line: usize, v: &str) -> Result<Vec<Constraint>, WireError> {
    let mut out = Vec::new();
    for tok in v.split(';').filter(|t| !t.is_empty()) {
        match parse_constraint_token(tok) {
            Ok(ConstraintToken::Constraint(c)) => out.push(c),
            _ => return Err(malformed(line, format!("bad constraint `{tok}`"))),
        }
    }
    Ok(out)
}

pub fn decode_augmented(text: &str) -> Result<Packet, WireError> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.first() != Some(&WIRE_MAGIC) {
        return Err(malformed(1, format!("expected `{WIRE_MAGIC}`")));
    }
    if !(3..=4).contains(&lines.len()) {
        return Err(malformed(lines.len(), "expected 3 or 4 lines".into()));
    }

    let mut f = Fields::new(2, lines[1], "packet")?;
    let id = f.parse("id")?;
    let src_ip: Ipv4Addr = f.parse("src")?;
    let dst_ip: Ipv4Addr = f.parse("dst")?;
    let src_mac: MacAddr = f.parse("smac")?;
    let dst_mac = match opt(f.take("dmac")?) {
        Some(m) => Some(m.parse().map_err(|_| malformed(2, format!("bad value for `dmac`: `{m}`")))?),
        None => None,
    };
    let kind = f.parse("kind")?;
    let tp_src = f.parse("sport")?;
    let tp_dst = f.parse("dport")?;
    let size = f.parse("size")?;
    let timestamp = f.parse("ts")?;
    let signature = opt(f.take("sig")?).map(str::to_string);
    f.finish()?;

    let mut f = Fields::new(3, lines[2], "handle")?;
    let handle = Handle {
        flow_id: f.take("flow")?.to_string(),
        origin: f.take("origin")?.into(),
        visited: ids(3, f.take("visited")?)?,
        tag: tag(3, f.take("tag")?)?,
    };
    f.finish()?;

    let ptt = match lines.get(3) {
        None => None,
        Some(l) => {
            let mut f = Fields::new(4, l, "ptt")?;
            let t = PolicyTransferToken {
                flow_id: f.take("flow")?.to_string(),
                origin: f.take("origin")?.into(),
                issuer: f.take("issuer")?.into(),
                constraints: constraints(4, f.take("cons")?)?,
                tag: tag(4, f.take("tag")?)?,
            };
            f.finish()?;
            Some(t)
        }
    };

    Ok(Packet {
        id,
        src_ip,
        dst_ip,
        src_mac,
        dst_mac,
        kind,
        tp_src,
        tp_dst,
        size,
        timestamp,
        signature,
        augmentation: Some(AugmentedHeader { handle, ptt }),
    })
}
