//! Identifier newtypes shared by every layer of the simulator.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Autonomous system identity, conventionally `AS<n>`.
    AsId
);
string_id!(
    /// Switch identity. Inter-domain gateways follow the `<a>SW<b>` convention.
    SwitchId
);
string_id!(
    /// Host identity inside a scenario.
    HostId
);

impl AsId {
    /// The numeric suffix used in gateway names: `AS12` -> `12`.
    pub fn gateway_tag(&self) -> &str {
        let s = self.0.as_str();
        match s.get(..2) {
            Some(p) if p.eq_ignore_ascii_case("AS") => &s[2..],
            _ => s,
        }
    }

    /// True for tokens shaped like `AS<digits>`.
    pub fn looks_like(token: &str) -> bool {
        token.len() > 2
            && token[..2].eq_ignore_ascii_case("AS")
            && token[2..].bytes().all(|b| b.is_ascii_digit())
    }
}

impl SwitchId {
    /// Name of the gateway owned by `owner` that faces `peer`.
    pub fn gateway(owner: &AsId, peer: &AsId) -> Self {
        Self(format!("{}SW{}", owner.gateway_tag(), peer.gateway_tag()))
    }

    /// Splits a gateway name into its `(owner, peer)` tags.
    pub fn gateway_parts(&self) -> Option<(&str, &str)> {
        let (a, b) = self.0.split_once("SW")?;
        let digits = |s: &str| !s.is_empty() && s.bytes().all(|c| c.is_ascii_digit());
        (digits(a) && digits(b)).then_some((a, b))
    }
}
