//! Drive the interactive shell from a script: request a path, cut the
//! fiber under it, and inspect the result.
//!
//! ```text
//! cargo run --example osd_shell
//! ```

use lightpath::cli::Shell;
use lightpath::device::OpticalPlant;
use lightpath::world::{World, WorldConfig};

const TOPOLOGY: &str = include_str!("../data/transatlantic.topo");

const SCRIPT: &[&str] = &[
    "discover optical",
    "path create cern caltech",
    "topo show",
    "cut tx-chi",
    "step 200",
    "path list",
    "path teardown agent-geneva/1",
    "path list",
];

fn main() {
    let plant = OpticalPlant::parse(TOPOLOGY).expect("bundled topology parses");
    let mut shell = Shell::new(World::new(plant, WorldConfig::default()).expect("world builds"));
    for line in SCRIPT {
        println!("osd> {line}");
        println!("{}", shell.exec(line));
    }
}
