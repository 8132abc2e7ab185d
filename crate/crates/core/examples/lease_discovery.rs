//! Agents register with the lookup service under renewable leases. Crash
//! one and watch its registration lapse and the subscribers get told.
//!
//! ```text
//! cargo run --example lease_discovery
//! ```

use lightpath::device::OpticalPlant;
use lightpath::simnet::{FaultKind, FaultSpec, NodeId};
use lightpath::world::{World, WorldConfig};

const TOPOLOGY: &str = include_str!("../data/transatlantic.topo");

fn main() {
    let plant = OpticalPlant::parse(TOPOLOGY).expect("bundled topology parses");
    let mut world = World::new(plant, WorldConfig::default()).expect("world builds");
    let monitor = world.add_client("monitor").expect("fresh node");
    world.subscribe(&monitor, None);
    let group = world.config().agent.group.clone();

    let names = |w: &World| -> Vec<String> { w.discover(&group).iter().map(|d| d.node.to_string()).collect() };
    println!("t={} discover: {:?}", world.now(), names(&world));

    let at = world.now().plus(5_000);
    world
        .inject_fault(FaultSpec {
            kind: FaultKind::CrashAgent(NodeId::from("agent-newyork")),
            at,
        })
        .expect("known node");
    world.run_for(5_000 + world.config().registration_lease_ms);
    println!("t={} discover: {:?}", world.now(), names(&world));

    for r in world.trace().of_kind("notice").filter(|r| r.node == "monitor") {
        println!("t={} monitor notified: {}", r.time, r.detail);
    }
}
