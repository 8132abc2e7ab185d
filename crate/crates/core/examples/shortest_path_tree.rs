//! Build a shortest-path tree over the mesh topology, then cut a span and
//! recompute.
//!
//! ```text
//! cargo run --example shortest_path_tree
//! ```

use lightpath::device::{OpticalPlant, SpanState, SwitchId};
use lightpath::simnet::SimTime;
use lightpath::topology::TopoGraph;

const TOPOLOGY: &str = include_str!("../data/mesh5.topo");

fn show(plant: &OpticalPlant, root: &SwitchId) {
    let tree = TopoGraph::from_plant(plant).compute_spt(root);
    for v in plant.switches().map(|s| &s.id) {
        match (tree.dist(v), tree.spans_to(v)) {
            (Some(d), Some(spans)) => println!("  {root} -> {v}: cost {d} via {spans:?}"),
            _ => println!("  {root} -> {v}: unreachable"),
        }
    }
}

fn main() {
    let mut plant = OpticalPlant::parse(TOPOLOGY).expect("bundled topology parses");
    let root = SwitchId::from("a");
    println!("all spans lit:");
    show(&plant, &root);
    plant
        .set_span_state("ab.fwd", SpanState::Cut, SimTime::ZERO)
        .expect("span exists");
    println!("after cutting ab.fwd:");
    show(&plant, &root);
}
