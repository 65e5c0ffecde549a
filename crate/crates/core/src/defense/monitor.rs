//! Tumbling-window request counters with optional decayed history.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{scaled_thresholds, CapacityModel, DefenseError, Thresholds};
use crate::ids::SwitchId;

/// A host as the controller can observe it: the switch port it sits behind.
/// Spoofed source addresses do not change it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HostKey {
    pub switch: SwitchId,
    pub port: u32,
}

impl fmt::Display for HostKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.switch, self.port)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    /// Detect and log only.
    #[default]
    None,
    /// Admit at most the threshold per window, drop the rest.
    Throttle,
    /// Install a block rule for the offender once.
    DropRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Ok,
    Throttle,
    /// `install` is true the first time an offender is caught.
    DropRule { install: bool },
}

/// How many past windows feed the comparison and how fast they fade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryConfig {
    pub windows: usize,
    pub decay: f64,
}

impl Default for HistoryConfig {
    fn default() -> Self {
        Self {
            windows: 0,
            decay: 0.5,
        }
    }
}

impl HistoryConfig {
    /// `sum(c_k * decay^k)` over the current count and the kept past counts
    /// (most recent first).
    pub fn weighted(&self, current: u64, past: &[u64]) -> f64 {
        let mut w = 1.0;
        let mut total = current as f64;
        for c in past.iter().take(self.windows) {
            w *= self.decay;
            total += *c as f64 * w;
        }
        total
    }

    /// `sum(decay^k)` for k = 0..=n.
    pub fn norm(&self, n: usize) -> f64 {
        let mut w = 1.0;
        let mut total = 1.0;
        for _ in 0..n.min(self.windows) {
            w *= self.decay;
            total += w;
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingScope {
    Host,
    Switch,
    Rate,
}

/// A threshold crossing, logged once per offender and window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub tick: u64,
    pub scope: CrossingScope,
    pub offender: String,
    pub observed: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Default)]
struct Counter {
    window: u64,
    current: u64,
    past: VecDeque<u64>,
    observed_windows: u64,
    logged_window: Option<u64>,
}

impl Counter {
    fn roll(&mut self, w: u64, keep: usize) {
        if self.observed_windows == 0 {
            self.window = w;
            self.observed_windows = 1;
            return;
        }
        if w <= self.window {
            return;
        }
        let gap = w - self.window;
        self.past.push_front(self.current);
        for _ in 1..gap.min(keep as u64 + 1) {
            self.past.push_front(0);
        }
        self.past.truncate(keep);
        self.current = 0;
        self.window = w;
        self.observed_windows += gap;
    }

    fn past(&self) -> Vec<u64> {
        self.past.iter().copied().collect()
    }

    fn log_once(&mut self) -> bool {
        if self.logged_window == Some(self.window) {
            return false;
        }
        self.logged_window = Some(self.window);
        true
    }
}

/// Pluggable detector interface. The threshold monitor is the only
/// implementation shipped.
pub trait FloodDetector: Send {
    fn observe(&mut self, host: &HostKey, tick: u64) -> Verdict;
    /// Window-limited admission for a named rate constraint.
    fn within_rate(&mut self, key: &str, limit: u32, tick: u64) -> bool;
    fn rescale(&mut self, instances: u64, history: HistoryConfig) -> Result<(), DefenseError>;
    fn thresholds(&self) -> Thresholds;
    fn crossings(&self) -> &[Crossing];
}

#[derive(Debug, Clone)]
pub struct FloodMonitor {
    cap: CapacityModel,
    window: u64,
    history: HistoryConfig,
    response: Response,
    thresholds: Thresholds,
    hosts: BTreeMap<HostKey, Counter>,
    switches: BTreeMap<SwitchId, Counter>,
    rates: BTreeMap<String, Counter>,
    blocked: BTreeSet<HostKey>,
    crossings: Vec<Crossing>,
}

const EPS: f64 = 1e-9;

impl FloodMonitor {
    pub fn new(
        cap: CapacityModel,
        window: u64,
        history: HistoryConfig,
        response: Response,
    ) -> Result<Self, DefenseError> {
        Ok(Self {
            thresholds: scaled_thresholds(&cap, 1)?,
            cap,
            window: window.max(1),
            history,
            response,
            hosts: BTreeMap::new(),
            switches: BTreeMap::new(),
            rates: BTreeMap::new(),
            blocked: BTreeSet::new(),
            crossings: Vec::new(),
        })
    }

    pub fn response(&self) -> Response {
        self.response
    }

    pub fn is_blocked(&self, host: &HostKey) -> bool {
        self.blocked.contains(host)
    }

    fn over(&self, c: &Counter, budget: u64) -> (bool, f64, f64) {
        let candidate = c.current + 1;
        let n = (c.observed_windows.saturating_sub(1)) as usize;
        let score = self.history.weighted(candidate, &c.past());
        let limit = budget as f64 * self.history.norm(n);
        (score > limit * (1.0 + EPS) + EPS, score, limit)
    }
}

impl FloodDetector for FloodMonitor {
    fn observe(&mut self, host: &HostKey, tick: u64) -> Verdict {
        if self.response == Response::DropRule && self.blocked.contains(host) {
            return Verdict::DropRule { install: false };
        }
        let w = tick / self.window;
        let keep = self.history.windows;
        let host_budget = self.thresholds.host_budget();
        let sw_budget = self.thresholds.switch_budget();

        let mut hc = self.hosts.remove(host).unwrap_or_default();
        let mut sc = self.switches.remove(&host.switch).unwrap_or_default();
        hc.roll(w, keep);
        sc.roll(w, keep);

        let (mut over_host, hs, hl) = self.over(&hc, host_budget);
        if self.response == Response::Throttle && hc.current + 1 > host_budget {
            // hard cap on admitted requests per window
            over_host = true;
        }
        let (over_sw, ss, sl) = self.over(&sc, sw_budget);

        if over_host && hc.log_once() {
            self.crossings.push(Crossing {
                tick,
                scope: CrossingScope::Host,
                offender: host.to_string(),
                observed: hs,
                threshold: hl,
            });
        }
        if over_sw && sc.log_once() {
            self.crossings.push(Crossing {
                tick,
                scope: CrossingScope::Switch,
                offender: host.switch.to_string(),
                observed: ss,
                threshold: sl,
            });
        }

        let verdict = match self.response {
            Response::DropRule if over_host => {
                hc.current += 1;
                self.blocked.insert(host.clone());
                Verdict::DropRule { install: true }
            }
            Response::Throttle if over_host => Verdict::Throttle,
            Response::Throttle | Response::DropRule if over_sw => Verdict::Throttle,
            _ => {
                hc.current += 1;
                sc.current += 1;
                Verdict::Ok
            }
        };
        self.hosts.insert(host.clone(), hc);
        self.switches.insert(host.switch.clone(), sc);
        verdict
    }

    fn within_rate(&mut self, key: &str, limit: u32, tick: u64) -> bool {
        let w = tick / self.window;
        let c = self.rates.entry(key.to_string()).or_default();
        c.roll(w, 0);
        if c.current < limit as u64 {
            c.current += 1;
            return true;
        }
        if c.log_once() {
            self.crossings.push(Crossing {
                tick,
                scope: CrossingScope::Rate,
                offender: key.to_string(),
                observed: (c.current + 1) as f64,
                threshold: limit as f64,
            });
        }
        false
    }

    fn rescale(&mut self, instances: u64, history: HistoryConfig) -> Result<(), DefenseError> {
        self.thresholds = scaled_thresholds(&self.cap, instances)?;
        self.history = history;
        Ok(())
    }

    fn thresholds(&self) -> Thresholds {
        self.thresholds
    }

    fn crossings(&self) -> &[Crossing] {
        &self.crossings
    }
}
