//! Parameter sweeps. Points run in parallel, each on its own world.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{emit_all, EmitFormat, Labeled, MetricsReport};
use super::scenario::{LoadError, Scenario};
use super::sim::Sim;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    PeCount,
    SwitchCount,
    AsCount,
    RequestRate,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::PeCount => "pe_count",
            Axis::SwitchCount => "switch_count",
            Axis::AsCount => "as_count",
            Axis::RequestRate => "request_rate",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pe_count" => Ok(Axis::PeCount),
            "switch_count" => Ok(Axis::SwitchCount),
            "as_count" => Ok(Axis::AsCount),
            "request_rate" => Ok(Axis::RequestRate),
            _ => Err(format!(
                "unknown axis `{s}` (pe_count, switch_count, as_count, request_rate)"
            )),
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub variant: String,
    pub report: MetricsReport,
}

fn count(axis: Axis, v: f64) -> Result<usize, LoadError> {
    if v < 1.0 || v.fract() != 0.0 {
        return Err(LoadError::Invalid(format!("{axis} point {v} is not a positive integer")));
    }
    Ok(v as usize)
}

/// The scenario with one axis set to `value`.
pub fn at_point(base: &Scenario, axis: Axis, value: f64) -> Result<Scenario, LoadError> {
    let mut s = base.clone();
    match axis {
        Axis::PeCount => s.set_pe_count(count(axis, value)?),
        Axis::RequestRate => {
            if !(value > 0.0 && value.is_finite()) {
                return Err(LoadError::Invalid(format!("request rate {value} must be positive")));
            }
            let flagged = s.traffic.iter().any(|t| t.sweep_rate);
            for t in s.traffic.iter_mut().filter(|t| t.sweep_rate || !flagged) {
                t.rate = Some(value);
                if t.duration.is_some() {
                    t.count = None;
                }
            }
        }
        Axis::SwitchCount | Axis::AsCount => {
            let Some(spec) = s.synthetic.as_mut() else {
                return Err(LoadError::Invalid(format!("axis {axis} needs a synthetic world")));
            };
            let n = count(axis, value)?;
            if axis == Axis::SwitchCount {
                spec.switches = n;
            } else {
                spec.domains = n;
            }
            s.rebuild()?;
        }
    }
    Ok(s)
}

/// One run per (point, variant), ordered by point then variant.
pub fn sweep(base: &Scenario, axis: Axis, points: &[f64]) -> Result<Vec<SweepPoint>, LoadError> {
    let variants = base.variant_list();
    let mut jobs = Vec::new();
    for &p in points {
        let s = at_point(base, axis, p)?;
        for v in &variants {
            jobs.push((p, v.name.clone(), s.with_variant(v)));
        }
    }
    jobs.into_par_iter()
        .map(|(value, variant, s)| {
            let report = Sim::new(&s)?.with_variant_name(&variant).run();
            Ok(SweepPoint {
                value,
                variant,
                report,
            })
        })
        .collect()
}

fn fmt_value(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

pub fn emit_sweep(axis: Axis, points: &[SweepPoint], format: EmitFormat) -> String {
    let items: Vec<Labeled<'_>> = points
        .iter()
        .map(|p| Labeled {
            axis: axis.as_str(),
            value: fmt_value(p.value),
            report: &p.report,
        })
        .collect();
    emit_all(&items, format)
}
