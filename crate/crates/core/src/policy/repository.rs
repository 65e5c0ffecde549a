//! JSON policy repository: an array of flat records with string fields.
//!
//! Field names follow the controller database layout (`srcasid`, `srcassub`,
//! ..., `seq`, `action`). Two optional extension fields, `srcent` and
//! `dstext`, carry entry and exit gateway selectors. Both `""` and `*` mean
//! wildcard. Unknown fields are rejected.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::addr::MacAddr;
use super::compact::{
    constraints_text, parse_action, parse_constraint_list, parse_path,
    parse_sec_profile, parse_services,
};
use super::expr::{parse_host_ip, EndpointSelector, PolicyExpression};
use super::label::{parse_label_constraint, LabelConstraint};
use super::{check_unique_ids, PolicyError};
use crate::ids::{AsId, SwitchId};

const FIELDS: [&str; 23] = [
    "id",
    "flowid",
    "srcasid",
    "srcassub",
    "srcastype",
    "srcastrulabel",
    "dstasid",
    "dstassub",
    "dstastype",
    "dstastrulabel",
    "srcip",
    "dstip",
    "srcmac",
    "dstmac",
    "user",
    "flowcons",
    "domcons",
    "services",
    "secprof",
    "seq",
    "action",
    "srcent",
    "dstext",
];

/// One repository record as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyRecord {
    pub id: String,
    pub flowid: String,
    pub srcasid: String,
    pub srcassub: String,
    pub srcastype: String,
    pub srcastrulabel: String,
    pub dstasid: String,
    pub dstassub: String,
    pub dstastype: String,
    pub dstastrulabel: String,
    pub srcip: String,
    pub dstip: String,
    pub srcmac: String,
    pub dstmac: String,
    pub user: String,
    pub flowcons: String,
    pub domcons: String,
    pub services: String,
    pub secprof: String,
    pub seq: String,
    pub action: String,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub srcent: String,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub dstext: String,
}

fn field(v: &str) -> Option<&str> {
    let t = v.trim();
    (!t.is_empty() && t != "*").then_some(t)
}

fn selector(
    asid: &str,
    sub: &str,
    ty: &str,
    label: &str,
    gateway: &str,
    ip: &str,
    mac: &str,
) -> Result<EndpointSelector, PolicyError> {
    let gateway = field(gateway)
        .map(|g| {
            if !g.contains(|c: char| c.is_whitespace() || c == ',') {
                Ok(SwitchId::from(g))
            } else {
                Err(PolicyError::Value {
                    what: "gateway",
                    text: g.to_string(),
                })
            }
        })
        .transpose()?;
    Ok(EndpointSelector {
        as_id: field(asid).map(AsId::from),
        subnet: field(sub).map(str::parse).transpose()?,
        as_type: field(ty).map(str::to_string),
        label_req: match field(label) {
            Some(l) => parse_label_constraint(l)?,
            None => LabelConstraint::Any,
        },
        gateway,
        host_ip: field(ip).map(parse_host_ip).transpose()?,
        host_mac: field(mac).map(str::parse::<MacAddr>).transpose()?,
    })
}

impl PolicyRecord {
    pub fn to_expression(&self) -> Result<PolicyExpression, PolicyError> {
        let mut validity = None;
        let flow_cons = parse_constraint_list(&self.flowcons, &mut validity)?;
        let dom_cons = parse_constraint_list(&self.domcons, &mut validity)?;
        let (action, action_exit) = parse_action(&self.action)?;
        Ok(PolicyExpression {
            id: self.id.trim().to_string(),
            flow_id: field(&self.flowid).map(str::to_string),
            source: selector(
                &self.srcasid,
                &self.srcassub,
                &self.srcastype,
                &self.srcastrulabel,
                &self.srcent,
                &self.srcip,
                &self.srcmac,
            )?,
            dest: selector(
                &self.dstasid,
                &self.dstassub,
                &self.dstastype,
                &self.dstastrulabel,
                &self.dstext,
                &self.dstip,
                &self.dstmac,
            )?,
            user: field(&self.user).map(str::to_string),
            flow_cons,
            dom_cons,
            services: parse_services(&self.services)?,
            sec_profile: parse_sec_profile(&self.secprof)?,
            path: parse_path(&self.seq)?,
            action,
            action_exit,
            validity,
        })
    }

    pub fn from_expression(pe: &PolicyExpression) -> Self {
        fn s<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map_or_else(|| "*".to_string(), ToString::to_string)
        }
        fn joined<T: ToString>(items: &[T]) -> String {
            if items.is_empty() {
                return "*".to_string();
            }
            items.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
        }
        let cons = |c, v| {
            let t = constraints_text(c, v);
            t.strip_prefix('(')
                .and_then(|r| r.strip_suffix(')'))
                .map_or(t.clone(), str::to_string)
        };
        PolicyRecord {
            id: pe.id.clone(),
            flowid: s(&pe.flow_id),
            srcasid: s(&pe.source.as_id),
            srcassub: s(&pe.source.subnet),
            srcastype: s(&pe.source.as_type),
            srcastrulabel: pe.source.label_req.to_string(),
            dstasid: s(&pe.dest.as_id),
            dstassub: s(&pe.dest.subnet),
            dstastype: s(&pe.dest.as_type),
            dstastrulabel: pe.dest.label_req.to_string(),
            srcip: s(&pe.source.host_ip),
            dstip: s(&pe.dest.host_ip),
            srcmac: s(&pe.source.host_mac),
            dstmac: s(&pe.dest.host_mac),
            user: s(&pe.user),
            flowcons: cons(&pe.flow_cons, pe.validity.as_ref()),
            domcons: cons(&pe.dom_cons, None),
            services: pe.services.as_deref().map_or_else(|| "*".to_string(), joined),
            secprof: pe.sec_profile.map_or_else(|| "*".to_string(), |p| p.tags().join(", ")),
            seq: pe.path.as_ref().map_or_else(|| "*".to_string(), |p| joined(&p.tokens())),
            action: match &pe.action_exit {
                Some(exit) => format!("({exit}, {})", pe.action),
                None => pe.action.to_string().to_lowercase(),
            },
            srcent: pe.source.gateway.as_ref().map(ToString::to_string).unwrap_or_default(),
            dstext: pe.dest.gateway.as_ref().map(ToString::to_string).unwrap_or_default(),
        }
    }
}

/// Parses a repository document into expressions.
pub fn parse_repository(document: &str) -> Result<Vec<PolicyExpression>, PolicyError> {
    let value: Value =
        serde_json::from_str(document).map_err(|e| PolicyError::Document(e.to_string()))?;
    parse_repository_value(&value)
}

/// Same as [`parse_repository`] for an already-decoded JSON value.
pub fn parse_repository_value(value: &Value) -> Result<Vec<PolicyExpression>, PolicyError> {
    let records = value
        .as_array()
        .ok_or_else(|| PolicyError::Document("top level must be an array of records".into()))?;
    let mut out = Vec::with_capacity(records.len());
    for (index, rec) in records.iter().enumerate() {
        let obj = rec
            .as_object()
            .ok_or_else(|| PolicyError::Document(format!("record {index} is not an object")))?;
        for (k, v) in obj {
            if !FIELDS.contains(&k.as_str()) {
                return Err(PolicyError::UnknownField {
                    field: k.clone(),
                    index,
                });
            }
            if !v.is_string() {
                return Err(PolicyError::Document(format!(
                    "record {index}: field `{k}` must be a string"
                )));
            }
        }
        for required in ["id", "action"] {
            let present = obj
                .get(required)
                .and_then(Value::as_str)
                .is_some_and(|s| !s.trim().is_empty());
            if !present {
                return Err(PolicyError::MissingField {
                    field: required,
                    index,
                });
            }
        }
        let record: PolicyRecord = serde_json::from_value(rec.clone())
            .map_err(|e| PolicyError::Document(format!("record {index}: {e}")))?;
        out.push(record.to_expression()?);
    }
    check_unique_ids(&out)?;
    Ok(out)
}

/// Serializes expressions as a pretty-printed repository document.
pub fn to_repository(pes: &[PolicyExpression]) -> String {
    let records: Vec<PolicyRecord> = pes.iter().map(PolicyRecord::from_expression).collect();
    serde_json::to_string_pretty(&records).expect("records serialize")
}
