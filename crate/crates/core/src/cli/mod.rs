//! Command-line surface: scenario files, metrics, the interactive shell,
//! topology rendering, and the batch runner.

pub mod metrics;
pub mod render;
pub mod run;
pub mod scenario;
pub mod shell;

pub use metrics::MetricsRecord;
pub use render::render_topology;
pub use run::{run, RunArgs, RunReport};
pub use scenario::{random_schedule, ChaosConfig, Scenario};
pub use shell::Shell;
