//! Run many seeded random fault schedules over a five-switch mesh and check
//! that no cross-connect outlives its lightpath.
//!
//! ```text
//! cargo run --release --example chaos_schedules -- [seeds]
//! ```

use std::time::Instant;

use lightpath::cli::{random_schedule, ChaosConfig};
use lightpath::device::OpticalPlant;
use lightpath::world::{World, WorldConfig};

const MESH: &str = include_str!("../data/mesh5.topo");

fn main() {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let plant = OpticalPlant::parse(MESH).expect("bundled topology parses");
    let chaos = ChaosConfig::default();
    let started = Instant::now();
    let mut dirty = Vec::new();
    let mut reroutes = 0;
    for seed in 0..seeds {
        let scenario = random_schedule(&plant, seed, &chaos);
        let cfg = WorldConfig { seed, ..WorldConfig::default() };
        let mut world = World::new(plant.clone(), cfg).expect("world builds");
        scenario.install(&mut world).expect("schedule is valid");
        world.run_until(scenario.end_time());
        reroutes += world.trace().of_kind("reroute_ok").count();
        let left = world.plant().owned_cross_connects();
        if !left.is_empty() {
            dirty.push((seed, left));
        }
    }
    println!(
        "{seeds} schedules, {reroutes} reroutes, {} with leftover cross-connects, {:.2?}",
        dirty.len(),
        started.elapsed()
    );
    for (seed, left) in dirty.iter().take(5) {
        println!("  seed {seed}: {left:?}");
    }
}
