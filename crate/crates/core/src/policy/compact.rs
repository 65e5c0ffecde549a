//! Angle-bracket notation for policy expressions.
//!
//! ```text
//! pe      := [ id "=" ] "<" field { "," field } ">" ":" "<" action ">"
//! field   := "*" | atom | "(" list ")" | "{" list "}"
//! list    := atom { ("," | ";") atom }
//! action  := verdict | "(" switch "," verdict ")"
//! ```
//!
//! There are exactly thirteen fields, in template order: flow id, source AS,
//! destination AS, source IP, destination IP, source MAC, destination MAC,
//! user, flow constraints, domain constraints, services, security profile,
//! path. AS descriptors such as `(10.0.0.0/24, EDU, SL2)` are classified
//! token by token: `AS<n>` is the AS id, anything with `/` a subnet, `SL..`
//! a label requirement, `<a>SW<b>` a gateway, and any other token the AS type.

use super::addr::{Ipv4Cidr, MacAddr};
use super::expr::{
    normalize_services, parse_constraint_token, parse_host_ip, Action, Constraint,
    ConstraintToken, EndpointSelector, PathSpec, PolicyExpression, PortRange, SecProfile,
    Validity,
};
use super::label::parse_label_constraint;
use super::{check_unique_ids, PolicyError};
use crate::ids::{AsId, SwitchId};

pub const FIELD_COUNT: usize = 13;

/// Splits on any of `seps` at bracket depth zero.
pub(crate) fn split_top<'a>(s: &'a str, seps: &[char]) -> Vec<&'a str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '{' => depth += 1,
            ')' | '}' => depth -= 1,
            c if depth == 0 && seps.contains(&c) => {
                out.push(&s[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

fn strip_brackets(s: &str) -> &str {
    let t = s.trim();
    for (open, close) in [('(', ')'), ('{', '}')] {
        if let Some(inner) = t.strip_prefix(open).and_then(|r| r.strip_suffix(close)) {
            return inner.trim();
        }
    }
    t
}

fn is_wild(s: &str) -> bool {
    let t = strip_brackets(s);
    t.is_empty() || t == "*"
}

/// Atoms of a list field; `*` entries are dropped.
fn list_items(s: &str) -> Vec<&str> {
    split_top(strip_brackets(s), &[',', ';'])
        .into_iter()
        .map(str::trim)
        .filter(|t| !t.is_empty() && *t != "*")
        .collect()
}

fn single_atom(s: &str) -> Result<Option<&str>, PolicyError> {
    let items = list_items(s);
    match items.len() {
        0 => Ok(None),
        1 => Ok(Some(items[0])),
        _ => Err(PolicyError::Value {
            what: "single value",
            text: s.trim().to_string(),
        }),
    }
}

pub(crate) fn is_gateway_token(t: &str) -> bool {
    SwitchId::from(t).gateway_parts().is_some()
}

fn parse_descriptor(field: &str) -> Result<EndpointSelector, PolicyError> {
    let mut sel = EndpointSelector::default();
    let dup = |what| PolicyError::Value {
        what,
        text: field.trim().to_string(),
    };
    for tok in list_items(field) {
        if AsId::looks_like(tok) {
            if sel.as_id.replace(AsId::from(tok)).is_some() {
                return Err(dup("AS descriptor (two AS ids)"));
            }
        } else if tok.contains('/') {
            if sel.subnet.replace(tok.parse()?).is_some() {
                return Err(dup("AS descriptor (two subnets)"));
            }
        } else if tok.len() >= 2 && tok[..2].eq_ignore_ascii_case("SL") {
            if !sel.label_req.is_any() {
                return Err(dup("AS descriptor (two labels)"));
            }
            sel.label_req = parse_label_constraint(tok)?;
        } else if is_gateway_token(tok) {
            if sel.gateway.replace(SwitchId::from(tok)).is_some() {
                return Err(dup("AS descriptor (two gateways)"));
            }
        } else if tok.bytes().next().is_some_and(|b| b.is_ascii_digit()) {
            let ip = parse_host_ip(tok)?;
            if sel.subnet.replace(Ipv4Cidr::new(ip, 32).unwrap()).is_some() {
                return Err(dup("AS descriptor (two subnets)"));
            }
        } else if sel.as_type.replace(tok.to_string()).is_some() {
            return Err(dup("AS descriptor (two types)"));
        }
    }
    Ok(sel)
}

pub(crate) fn parse_constraint_list(
    field: &str,
    validity: &mut Option<Validity>,
) -> Result<Vec<Constraint>, PolicyError> {
    let mut out = Vec::new();
    for tok in list_items(field) {
        match parse_constraint_token(tok)? {
            ConstraintToken::Constraint(c) => {
                if !out.contains(&c) {
                    out.push(c);
                }
            }
            ConstraintToken::Validity(v) => {
                if validity.replace(v).is_some_and(|old| old != v) {
                    return Err(PolicyError::Value {
                        what: "time window (given twice)",
                        text: tok.to_string(),
                    });
                }
            }
        }
    }
    Ok(out)
}

pub(crate) fn parse_services(field: &str) -> Result<Option<Vec<PortRange>>, PolicyError> {
    let items = list_items(field);
    if items.is_empty() {
        return Ok(None);
    }
    let v = items
        .into_iter()
        .map(str::parse)
        .collect::<Result<Vec<PortRange>, _>>()?;
    Ok(Some(normalize_services(v)))
}

pub(crate) fn parse_sec_profile(field: &str) -> Result<Option<SecProfile>, PolicyError> {
    let items = list_items(field);
    if items.is_empty() {
        return Ok(None);
    }
    SecProfile::parse_tokens(items).map(Some)
}

pub(crate) fn parse_path(field: &str) -> Result<Option<PathSpec>, PolicyError> {
    let items = list_items(field);
    if items.is_empty() {
        return Ok(None);
    }
    PathSpec::from_tokens(&items, field.trim()).map(Some)
}

/// `Allow`, `Deny`, or `(1SW2, Allow)` in either order.
pub(crate) fn parse_action(text: &str) -> Result<(Action, Option<SwitchId>), PolicyError> {
    let items = list_items(text);
    let mut action = None;
    let mut exit = None;
    for tok in &items {
        if let Ok(a) = tok.parse::<Action>() {
            if action.replace(a).is_some() {
                return Err(PolicyError::Value {
                    what: "action (two verdicts)",
                    text: text.to_string(),
                });
            }
        } else if exit.replace(SwitchId::from(*tok)).is_some() {
            return Err(PolicyError::Value {
                what: "action (two exit switches)",
                text: text.to_string(),
            });
        }
    }
    let action = action.ok_or_else(|| PolicyError::Value {
        what: "action",
        text: text.to_string(),
    })?;
    Ok((action, exit))
}

fn opt_token(field: &str) -> Result<Option<String>, PolicyError> {
    Ok(single_atom(field)?.map(str::to_string))
}

/// Parses one expression in angle-bracket notation.
pub fn parse_compact_pe(text: &str) -> Result<PolicyExpression, PolicyError> {
    let t = text.trim();
    let syntax = |msg: &str| PolicyError::Syntax(format!("{msg} in `{t}`"));
    let open = t.find('<').ok_or_else(|| syntax("missing `<`"))?;
    let prefix = t[..open].trim();
    let id = match prefix.strip_suffix('=') {
        Some(id) => id.trim().to_string(),
        None if prefix.is_empty() => String::new(),
        None => return Err(syntax("expected `id=` before `<`")),
    };
    let colon = t.rfind(':').ok_or_else(|| syntax("missing `:<action>`"))?;
    let body = t[open + 1..colon]
        .trim_end()
        .strip_suffix('>')
        .ok_or_else(|| syntax("missing `>` before `:`"))?;
    let action_text = t[colon + 1..]
        .trim()
        .strip_prefix('<')
        .and_then(|r| r.strip_suffix('>'))
        .ok_or_else(|| syntax("action must be enclosed in `<...>`"))?;

    let fields = split_top(body, &[',']);
    if fields.len() != FIELD_COUNT {
        return Err(PolicyError::FieldCount {
            expected: FIELD_COUNT,
            found: fields.len(),
        });
    }
    let (action, action_exit) = parse_action(action_text)?;

    let mut source = if is_wild(fields[1]) {
        EndpointSelector::default()
    } else {
        parse_descriptor(fields[1])?
    };
    let mut dest = if is_wild(fields[2]) {
        EndpointSelector::default()
    } else {
        parse_descriptor(fields[2])?
    };
    source.host_ip = single_atom(fields[3])?.map(parse_host_ip).transpose()?;
    dest.host_ip = single_atom(fields[4])?.map(parse_host_ip).transpose()?;
    source.host_mac = single_atom(fields[5])?.map(str::parse::<MacAddr>).transpose()?;
    dest.host_mac = single_atom(fields[6])?.map(str::parse::<MacAddr>).transpose()?;

    let mut validity = None;
    let flow_cons = parse_constraint_list(fields[8], &mut validity)?;
    let dom_cons = parse_constraint_list(fields[9], &mut validity)?;

    Ok(PolicyExpression {
        id,
        flow_id: opt_token(fields[0])?,
        source,
        dest,
        user: opt_token(fields[7])?,
        flow_cons,
        dom_cons,
        services: parse_services(fields[10])?,
        sec_profile: parse_sec_profile(fields[11])?,
        path: parse_path(fields[12])?,
        action,
        action_exit,
        validity,
    })
}

/// One expression per line; blank lines and `#` comments are skipped.
/// Expressions without an explicit id get `L<line>`.
pub fn parse_compact_document(text: &str) -> Result<Vec<PolicyExpression>, PolicyError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let mut pe = parse_compact_pe(l)?;
        if pe.id.is_empty() {
            pe.id = format!("L{}", n + 1);
        }
        out.push(pe);
    }
    check_unique_ids(&out)?;
    Ok(out)
}

fn list_text<T: ToString>(items: &[T]) -> String {
    match items {
        [] => "*".to_string(),
        [one] => one.to_string(),
        many => {
            let v: Vec<String> = many.iter().map(ToString::to_string).collect();
            format!("({})", v.join(";"))
        }
    }
}

fn opt_text<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "*".to_string(), ToString::to_string)
}

fn descriptor_text(sel: &EndpointSelector) -> String {
    if sel.domain_is_wildcard() {
        return "*".to_string();
    }
    let mut parts = Vec::new();
    if let Some(a) = &sel.as_id {
        parts.push(a.to_string());
    }
    if let Some(s) = &sel.subnet {
        parts.push(s.to_string());
    }
    if let Some(t) = &sel.as_type {
        parts.push(t.clone());
    }
    if !sel.label_req.is_any() {
        parts.push(sel.label_req.to_string());
    }
    if let Some(g) = &sel.gateway {
        parts.push(g.to_string());
    }
    format!("({})", parts.join(", "))
}

pub(crate) fn constraints_text(cons: &[Constraint], validity: Option<&Validity>) -> String {
    let mut items: Vec<String> = cons.iter().map(ToString::to_string).collect();
    if let Some(v) = validity {
        items.push(v.to_string());
    }
    list_text(&items)
}

/// Canonical angle-bracket text; parses back to an equal expression.
pub fn format_compact_pe(pe: &PolicyExpression) -> String {
    // The validity window rides along with the flow constraints.
    let fields = [
        opt_text(&pe.flow_id),
        descriptor_text(&pe.source),
        descriptor_text(&pe.dest),
        opt_text(&pe.source.host_ip),
        opt_text(&pe.dest.host_ip),
        opt_text(&pe.source.host_mac),
        opt_text(&pe.dest.host_mac),
        opt_text(&pe.user),
        constraints_text(&pe.flow_cons, pe.validity.as_ref()),
        constraints_text(&pe.dom_cons, None),
        pe.services.as_deref().map_or_else(|| "*".to_string(), list_text),
        pe.sec_profile
            .map_or_else(|| "*".to_string(), |p| format!("{{{}}}", p.tags().join(", "))),
        pe.path
            .as_ref()
            .map_or_else(|| "*".to_string(), |p| list_text(&p.tokens())),
    ];
    let action = match &pe.action_exit {
        Some(exit) => format!("({exit}, {})", pe.action),
        None => pe.action.to_string(),
    };
    let prefix = if pe.id.is_empty() {
        String::new()
    } else {
        format!("{}=", pe.id)
    };
    format!("{prefix}<{}>:<{action}>", fields.join(", "))
}
