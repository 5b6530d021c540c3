//! Discrete-event engine, scenarios and metrics.

mod engine;
mod metrics;
mod scenario;

pub use engine::{derive_seed, model_queue, run, RunOutput};
pub use metrics::{compare, geometric_mean, Comparison, ComparisonRow, MetricsReport, ModelMetrics};
pub use scenario::{ModelEntry, Scenario, StopRule};
