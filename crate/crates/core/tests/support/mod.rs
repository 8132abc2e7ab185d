//! Builders and oracles shared by the integration tests.
#![allow(dead_code)]

use lightpath::device::{OpticalPlant, PortRef, SwitchId};
use lightpath::topology::TopoGraph;

pub const TRANSATLANTIC: &str = include_str!("../../data/transatlantic.topo");
pub const FOUR_CUTS: &str = include_str!("../../data/four_cuts.scenario");
pub const MESH: &str = include_str!("../../data/mesh5.topo");

/// `s0 - s1 - ... - s{n-1}`. Spans enter on port 2 and leave on port 3.
/// Host `h0` sits on `s0:1`, `hN` on the last switch's port 1, and `x<i>`
/// on port 4 of every switch.
pub fn linear(n: usize) -> OpticalPlant {
    let mut t = String::new();
    for i in 0..n {
        t.push_str(&format!("switch s{i} ports 6\nhost x{i} attached s{i}:4\n"));
    }
    for i in 0..n - 1 {
        t.push_str(&format!("span l{i} s{i}:3 <-> s{}:2\n", i + 1));
    }
    t.push_str(&format!("host h0 attached s0:1\nhost hN attached s{}:1\n", n - 1));
    OpticalPlant::parse(&t).expect("generated topology parses")
}

/// Adjacency matrix digraph: `cost[u][v] == 0` means no edge.
#[derive(Clone, Debug)]
pub struct Digraph {
    pub cost: Vec<Vec<u32>>,
}

impl Digraph {
    pub fn n(&self) -> usize {
        self.cost.len()
    }

    pub fn to_topo(&self) -> TopoGraph {
        let mut g = TopoGraph::new();
        for v in 0..self.n() {
            g.add_vertex(SwitchId::new(format!("v{v}")));
        }
        for (u, row) in self.cost.iter().enumerate() {
            for (v, &c) in row.iter().enumerate() {
                if c > 0 {
                    g.add_edge(
                        &format!("e{u}-{v}"),
                        PortRef::new(format!("v{u}"), v as u32 + 1),
                        PortRef::new(format!("v{v}"), u as u32 + 1),
                        f64::from(c),
                    );
                }
            }
        }
        g
    }

    /// Minimum cost over every simple path from `root`, by exhaustive DFS.
    pub fn brute_force(&self, root: usize) -> Vec<Option<u32>> {
        fn dfs(g: &Digraph, u: usize, cost: u32, seen: &mut Vec<bool>, best: &mut Vec<Option<u32>>) {
            if best[u].is_none_or(|b| cost < b) {
                best[u] = Some(cost);
            }
            for v in 0..g.n() {
                let c = g.cost[u][v];
                if c > 0 && !seen[v] {
                    seen[v] = true;
                    dfs(g, v, cost + c, seen, best);
                    seen[v] = false;
                }
            }
        }
        let mut best = vec![None; self.n()];
        let mut seen = vec![false; self.n()];
        seen[root] = true;
        dfs(self, root, 0, &mut seen, &mut best);
        best
    }

    /// Compare the library tree against the oracle; `Err` describes the
    /// first mismatch.
    pub fn check(&self, root: usize) -> Result<(), String> {
        let tree = self.to_topo().compute_spt(&SwitchId::new(format!("v{root}")));
        for (v, want) in self.brute_force(root).into_iter().enumerate() {
            let got = tree.dist(&SwitchId::new(format!("v{v}")));
            if got != want.map(f64::from) {
                return Err(format!("{self:?} root v{root}: v{v} got {got:?} want {want:?}"));
            }
        }
        Ok(())
    }
}
