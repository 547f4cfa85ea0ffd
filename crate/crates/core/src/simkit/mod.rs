//! Closed-loop simulation kit: integration, reference signals, the command
//! latency channel, traces and metrics.

pub mod integrate;
pub mod latency;
pub mod metrics;
pub mod rig;
pub mod signal;
pub mod trace;

pub use integrate::{advance_plant, rk4, Substep};
pub use latency::{Delivered, LatencyChannel, LatencyConfig, LATENCY_LIMIT_MS};
pub use metrics::{compute_metrics, Metrics, MetricsError, SignalMeta};
pub use rig::{run_closed_loop, AxisRig, EncoderConfig, GateConfig, RigMode, SimConfig, SimError, TickOutput};
pub use signal::{gen_signal, Signal, SignalKind};
pub use trace::{AxisTrace, LatencyStats, ThetaRow, Trace, TraceRow, CSV_HEADER};
