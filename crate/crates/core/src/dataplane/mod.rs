//! Simulated OpenFlow-style switches.

mod flow;
mod packet;
mod switch;

pub use flow::{
    FlowAction, FlowMatch, FlowRule, RuleOrigin, PRIORITY_DEFENSE, PRIORITY_DISCOVERY,
    PRIORITY_FORWARD,
};
pub use packet::{FlowKey, Packet};
pub use switch::{
    DataplaneError, ForwardOutcome, MissPolicy, PortPeer, Switch, SwitchCounters,
    DEFAULT_TABLE_CAPACITY,
};
