//! Policy engine and deterministic multi-domain SDN simulator.

pub mod controller;
pub mod dataplane;
pub mod defense;
pub mod harness;
pub mod ids;
pub mod interdomain;
pub mod policy;
pub mod topology;

pub use ids::{AsId, HostId, SwitchId};
pub use policy::*;
