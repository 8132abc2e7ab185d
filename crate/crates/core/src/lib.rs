//! Deterministic simulation of a distributed agent system that provisions
//! end-to-end optical lightpaths on demand.
//!
//! Layers, bottom up:
//!
//! - [`simnet`]: discrete-event scheduler, group messaging fabric, fault
//!   injection and the event trace.
//! - [`lookup`]: lease-based service registry with expiry notifications.
//! - [`device`]: emulated optical switches, fiber spans, light and alarms.
//! - [`topology`]: link-state graph, shortest-path trees, route extraction.
//! - [`agent`]: per-switch agents running commit-with-compensation path
//!   setup, path leases and loss-of-light reroute.
//! - [`world`]: wires the above into one runnable deployment.
//! - [`cli`]: scenario files, metrics, the interactive shell and `run`.

pub mod agent;
pub mod cli;
pub mod device;
pub mod lookup;
pub mod simnet;
pub mod topology;
pub mod world;
