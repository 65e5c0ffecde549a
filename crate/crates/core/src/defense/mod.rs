//! Flood detection and mitigation at the controller.

mod monitor;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use monitor::{
    Crossing, CrossingScope, FloodDetector, FloodMonitor, HistoryConfig, HostKey, Response,
    Verdict,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DefenseError {
    #[error("capacity model field `{0}` must be positive")]
    NonPositive(&'static str),
}

/// Controller and switch capacity figures, in requests per second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapacityModel {
    /// Controller capacity.
    pub cc: u64,
    /// Switches per controller.
    pub x: u64,
    /// Hosts per switch.
    pub y: u64,
    /// Switch capacity; informational.
    #[serde(default)]
    pub cs: Option<u64>,
}

impl CapacityModel {
    pub fn validate(&self) -> Result<(), DefenseError> {
        for (name, v) in [("cc", self.cc), ("x", self.x), ("y", self.y)] {
            if v == 0 {
                return Err(DefenseError::NonPositive(name));
            }
        }
        if self.cs == Some(0) {
            return Err(DefenseError::NonPositive("cs"));
        }
        Ok(())
    }
}

/// Per-switch and per-host request thresholds, exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Thresholds {
    pub tsw: Ratio<u64>,
    pub thost: Ratio<u64>,
}

impl Thresholds {
    /// Largest whole request count that does not exceed the host threshold.
    pub fn host_budget(&self) -> u64 {
        self.thost.to_integer()
    }

    pub fn switch_budget(&self) -> u64 {
        self.tsw.to_integer()
    }
}

/// `TSw = CC / X`, `Thost = TSw / Y`.
pub fn compute_thresholds(cap: &CapacityModel) -> Result<Thresholds, DefenseError> {
    scaled_thresholds(cap, 1)
}

/// Thresholds with the controller capacity multiplied by `instances`.
pub fn scaled_thresholds(cap: &CapacityModel, instances: u64) -> Result<Thresholds, DefenseError> {
    cap.validate()?;
    if instances == 0 {
        return Err(DefenseError::NonPositive("instances"));
    }
    let tsw = Ratio::new(cap.cc * instances, cap.x);
    Ok(Thresholds {
        tsw,
        thost: tsw / cap.y,
    })
}
