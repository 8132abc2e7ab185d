//! Provision one lightpath across a line of switches and show how setup
//! latency stays flat as the line grows.
//!
//! ```text
//! cargo run --example provision_lightpath
//! ```

use lightpath::device::OpticalPlant;
use lightpath::world::{RequestOutcome, World, WorldConfig};

fn line(n: usize) -> OpticalPlant {
    let mut t = String::new();
    for i in 0..n {
        t.push_str(&format!("switch s{i} ports 4\n"));
    }
    for i in 1..n {
        t.push_str(&format!("span l{i} s{}:3 <-> s{i}:2\n", i - 1));
    }
    t.push_str(&format!("host src attached s0:1\nhost dst attached s{}:1\n", n - 1));
    OpticalPlant::parse(&t).expect("generated topology parses")
}

fn main() {
    for n in [3, 5, 10, 20] {
        let mut world = World::new(line(n), WorldConfig::default()).expect("world builds");
        let req = world.submit("src", "dst");
        world.run_for(500);
        let Some(RequestOutcome::Active { path_id }) = world.outcome(req).cloned() else {
            println!("{n:>2} switches: {:?}", world.outcome(req));
            continue;
        };
        let commit = world.trace().of_kind("txn_commit").next().expect("committed");
        println!(
            "{n:>2} switches: {path_id} depth={} latency={}ms cross-connects={} light at dst={}",
            commit.field("depth").unwrap_or("?"),
            commit.field("latency").unwrap_or("?"),
            world.plant().owned_cross_connects().len(),
            world.plant().host_receives_light("dst"),
        );
    }
}
