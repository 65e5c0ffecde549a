//! Scenarios, the event-driven simulator, metrics and sweeps.

pub mod metrics;
pub mod scenario;
pub mod sim;
pub mod sweep;
pub mod synthetic;

pub use metrics::{emit, emit_all, EmitFormat, FlowRecord, InstallRecord, Labeled, MetricsReport, PacketRecord, SummaryRow};
pub use scenario::{load_scenario, LoadError, Mode, Scenario, Variant};
pub use sim::{run, run_variants, Sim};
pub use sweep::{at_point, emit_sweep, sweep, Axis, SweepPoint};
pub use synthetic::SyntheticSpec;
