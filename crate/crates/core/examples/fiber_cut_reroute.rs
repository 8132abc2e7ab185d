//! Replay the bundled four-cut scenario and print the path's route after
//! each repair alongside the modeled transfer's dark intervals.
//!
//! ```text
//! cargo run --example fiber_cut_reroute
//! ```

use lightpath::cli::Scenario;
use lightpath::device::OpticalPlant;
use lightpath::world::{World, WorldConfig};

const TOPOLOGY: &str = include_str!("../data/transatlantic.topo");
const SCENARIO: &str = include_str!("../data/four_cuts.scenario");

fn main() {
    let plant = OpticalPlant::parse(TOPOLOGY).expect("bundled topology parses");
    let scenario = Scenario::parse(SCENARIO).expect("bundled scenario parses");
    let mut world = World::new(plant, WorldConfig::default()).expect("world builds");
    scenario.install(&mut world).expect("scenario installs");
    world.run_until(scenario.end_time());

    for r in world.trace().records() {
        match r.kind.as_str() {
            "fault" | "path_active" | "reroute_ok" | "flow_dark" | "flow_lit" => {
                println!("{:>6} {:<12} {}", r.time.ms(), r.kind, r.detail)
            }
            _ => {}
        }
    }
    for flow in world.flows().values() {
        let dark: Vec<u64> = flow.dark_intervals.iter().map(|(a, b)| b.since(*a)).collect();
        println!("{} {:?}, dark intervals {dark:?} ms", flow.flow_id, flow.state);
    }
}
