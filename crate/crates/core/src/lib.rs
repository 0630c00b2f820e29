pub mod analytic;
pub mod config;
pub mod error;
pub mod kernel;
pub mod metrics;
pub mod mobility;
pub mod packet;
pub mod radio;
pub mod harness;
pub mod protocol;
pub mod sim;

pub use config::{Placement, ProtocolKind, SimConfig};
pub use error::{Result, SimError};
pub use harness::{run_config, run_scenario, ScenarioPreset, SummaryRow};
pub use metrics::MetricsReport;
pub use protocol::{Ambr, FloodReactive, Proactive, Protocol};
pub use sim::{Net, RunResult, Simulation};
