//! Matching a flow against expressions and resolving overlaps.
//!
//! Resolution order: no match denies; any matching deny wins; otherwise the
//! allow with the most non-wildcard condition fields, ties going to the
//! smallest id.

use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::addr::{Ipv4Cidr, MacAddr};
use super::expr::{
    Action, Constraint, EndpointSelector, PacketKind, PacketPredicate, PathSpec,
    PolicyExpression,
};
use super::label::{LabelBounds, SecurityLabel};
use crate::ids::{AsId, SwitchId};

/// What a domain is known to be: identity, address space, type and label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AsDescriptor {
    pub id: AsId,
    pub subnet: Ipv4Cidr,
    pub as_type: String,
    pub label: SecurityLabel,
}

/// Attributes extracted from a packet_in, plus what the handle says.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowContext {
    pub flow_id: String,
    pub src_as: Option<AsDescriptor>,
    pub dst_as: Option<AsDescriptor>,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_mac: MacAddr,
    pub dst_mac: Option<MacAddr>,
    pub user: Option<String>,
    pub service_port: u16,
    pub packet_type: PacketKind,
    pub timestamp: u64,
    /// AS ids visited before the evaluating domain; empty at the source.
    pub traversed_path: Vec<AsId>,
    /// Switch where the flow entered the evaluating domain.
    pub ingress_switch: Option<SwitchId>,
    pub signature: Option<String>,
}

fn selector_matches(sel: &EndpointSelector, desc: Option<&AsDescriptor>, ip: Ipv4Addr) -> bool {
    if let Some(id) = &sel.as_id {
        if desc.map(|d| &d.id) != Some(id) {
            return false;
        }
    }
    if let Some(sub) = &sel.subnet {
        if !sub.contains(ip) {
            return false;
        }
    }
    if let Some(t) = &sel.as_type {
        if !desc.is_some_and(|d| d.as_type.eq_ignore_ascii_case(t)) {
            return false;
        }
    }
    if !sel.label_req.is_any() && !desc.is_some_and(|d| sel.label_req.satisfies(d.label)) {
        return false;
    }
    if sel.host_ip.is_some_and(|h| h != ip) {
        return false;
    }
    true
}

fn constraint_matches(c: &Constraint, ctx: &FlowContext) -> bool {
    match c {
        Constraint::LabelPath(_) | Constraint::RateThreshold(_) => true,
        Constraint::PacketAttr(PacketPredicate::Type(k)) => &ctx.packet_type == k,
        Constraint::PacketAttr(PacketPredicate::Port(p)) => ctx.service_port == *p,
        Constraint::PacketAttr(PacketPredicate::Proto(p)) => ctx.packet_type.proto() == *p,
        Constraint::Signature(s) => ctx.signature.as_deref() == Some(s.as_str()),
    }
}

/// True iff every non-wildcard condition of `pe` holds for `ctx`.
pub fn match_pe(pe: &PolicyExpression, ctx: &FlowContext) -> bool {
    if pe.flow_id.as_ref().is_some_and(|f| f != &ctx.flow_id) {
        return false;
    }
    if !selector_matches(&pe.source, ctx.src_as.as_ref(), ctx.src_ip)
        || !selector_matches(&pe.dest, ctx.dst_as.as_ref(), ctx.dst_ip)
    {
        return false;
    }
    // Source gateway is where the flow entered; the destination gateway is
    // an exit pin, not a condition.
    if let Some(g) = &pe.source.gateway {
        if ctx.ingress_switch.as_ref() != Some(g) {
            return false;
        }
    }
    if pe.source.host_mac.is_some_and(|m| m != ctx.src_mac) {
        return false;
    }
    if let Some(m) = pe.dest.host_mac {
        if ctx.dst_mac != Some(m) {
            return false;
        }
    }
    if let Some(u) = &pe.user {
        if ctx.user.as_deref() != Some(u.as_str()) {
            return false;
        }
    }
    if !pe.constraints().all(|c| constraint_matches(c, ctx)) {
        return false;
    }
    if !pe.allows_port(ctx.service_port) {
        return false;
    }
    if let Some(PathSpec::As(seq)) = &pe.path {
        if &ctx.traversed_path != seq {
            return false;
        }
    }
    if pe.validity.is_some_and(|v| !v.contains(ctx.timestamp)) {
        return false;
    }
    true
}

/// Outcome of evaluating a repository against one flow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub verdict: Action,
    /// The winning allow, or the deny that overrode it.
    pub matched_pe: Option<String>,
    pub path_obligation: Option<Vec<SwitchId>>,
    pub label_obligation: Option<LabelBounds>,
    pub exit_obligation: Option<SwitchId>,
    pub ptt_constraints: Vec<Constraint>,
}

impl Decision {
    pub fn deny(matched_pe: Option<String>) -> Self {
        Decision {
            verdict: Action::Deny,
            matched_pe,
            path_obligation: None,
            label_obligation: None,
            exit_obligation: None,
            ptt_constraints: Vec::new(),
        }
    }

    pub fn is_allow(&self) -> bool {
        self.verdict == Action::Allow
    }

    /// Obligations an allowing expression places on the route.
    pub fn allow(pe: &PolicyExpression) -> Self {
        let labels: Vec<_> = pe
            .constraints()
            .filter_map(|c| match c {
                Constraint::LabelPath(l) => Some(*l),
                _ => None,
            })
            .collect();
        let label_obligation = (!labels.is_empty()).then(|| LabelBounds::from_constraints(&labels));
        let mut ptt: Vec<Constraint> = Vec::new();
        let delegated = pe
            .flow_cons
            .iter()
            .filter(|c| c.is_flow_scoped())
            .chain(pe.dom_cons.iter().filter(|c| matches!(c, Constraint::LabelPath(_))));
        for c in delegated {
            if !ptt.contains(c) {
                ptt.push(c.clone());
            }
        }
        Decision {
            verdict: Action::Allow,
            matched_pe: Some(pe.id.clone()),
            path_obligation: pe.switch_path().map(<[SwitchId]>::to_vec),
            label_obligation,
            exit_obligation: pe.action_exit.clone().or_else(|| pe.dest.gateway.clone()),
            ptt_constraints: ptt,
        }
    }
}

/// Deny that overrides, if any; otherwise the winning allow.
pub enum Selection<'a> {
    NoMatch,
    Denied(&'a PolicyExpression),
    Allowed(&'a PolicyExpression),
}

pub fn select<'a>(pes: &'a [PolicyExpression], ctx: &FlowContext) -> Selection<'a> {
    let mut deny: Option<&PolicyExpression> = None;
    let mut allow: Option<&PolicyExpression> = None;
    for pe in pes.iter().filter(|pe| match_pe(pe, ctx)) {
        match pe.action {
            Action::Deny => {
                if deny.is_none_or(|d| pe.id < d.id) {
                    deny = Some(pe);
                }
            }
            Action::Allow => {
                let better = allow.is_none_or(|a| {
                    let (sa, sb) = (pe.specificity(), a.specificity());
                    sa > sb || (sa == sb && pe.id < a.id)
                });
                if better {
                    allow = Some(pe);
                }
            }
        }
    }
    match (deny, allow) {
        (Some(d), _) => Selection::Denied(d),
        (None, Some(a)) => Selection::Allowed(a),
        (None, None) => Selection::NoMatch,
    }
}

pub fn select_policy(pes: &[PolicyExpression], ctx: &FlowContext) -> Decision {
    match select(pes, ctx) {
        Selection::NoMatch => Decision::deny(None),
        Selection::Denied(d) => Decision::deny(Some(d.id.clone())),
        Selection::Allowed(a) => Decision::allow(a),
    }
}
