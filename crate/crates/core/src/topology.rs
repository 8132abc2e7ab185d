//! Per-agent network view: a directed, cost-weighted graph of switches and
//! spans, link-state updates that keep it current, and shortest-path trees.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use thiserror::Error;

use crate::device::{Direction, OpticalPlant, PortId, PortRef, SpanState, SwitchId};

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub span_id: String,
    pub from: PortRef,
    pub to: PortRef,
    pub cost: f64,
    pub state: SpanState,
    /// `(origin_seq, origin)` of the last applied update; `(0, "")` is the
    /// configured baseline.
    pub version: (u64, String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkStateUpdate {
    pub origin: String,
    pub span_id: String,
    pub state: SpanState,
    pub cost: f64,
    pub origin_seq: u64,
    /// Endpoints, for spans the receiver may not know yet.
    pub announce: Option<(PortRef, PortRef)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChangeSet {
    pub spans: Vec<String>,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }
}

#[derive(Clone, Debug, Default)]
pub struct TopoGraph {
    vertices: BTreeSet<SwitchId>,
    edges: BTreeMap<String, Edge>,
    endpoints: BTreeMap<String, PortRef>,
    version: u64,
    seen: BTreeSet<(String, u64)>,
    pending: BTreeMap<String, Vec<LinkStateUpdate>>,
}

impl TopoGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Snapshot of the plant's switches, spans (with current state) and hosts.
    pub fn from_plant(plant: &OpticalPlant) -> Self {
        let mut g = TopoGraph::new();
        for sw in plant.switches() {
            g.add_vertex(sw.id.clone());
        }
        for span in plant.spans() {
            g.add_edge(&span.span_id, span.from.clone(), span.to.clone(), span.cost);
            if span.state == SpanState::Cut {
                g.edges.get_mut(&span.span_id).expect("just added").state = SpanState::Cut;
            }
        }
        for host in plant.hosts() {
            g.endpoints.insert(host.name.clone(), host.attached.clone());
        }
        g
    }

    pub fn add_vertex(&mut self, v: SwitchId) {
        self.vertices.insert(v);
    }

    pub fn add_edge(&mut self, span_id: &str, from: PortRef, to: PortRef, cost: f64) {
        self.vertices.insert(from.switch.clone());
        self.vertices.insert(to.switch.clone());
        self.edges.insert(
            span_id.to_string(),
            Edge {
                span_id: span_id.to_string(),
                from,
                to,
                cost,
                state: SpanState::Lit,
                version: (0, String::new()),
            },
        );
        self.version += 1;
    }

    pub fn add_endpoint(&mut self, host: &str, at: PortRef) {
        self.vertices.insert(at.switch.clone());
        self.endpoints.insert(host.to_string(), at);
    }

    pub fn vertices(&self) -> impl Iterator<Item = &SwitchId> {
        self.vertices.iter()
    }

    pub fn contains(&self, v: &SwitchId) -> bool {
        self.vertices.contains(v)
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn edge(&self, span_id: &str) -> Option<&Edge> {
        self.edges.get(span_id)
    }

    pub fn endpoint(&self, host: &str) -> Option<Endpoint> {
        self.endpoints.get(host).map(|p| Endpoint {
            host: host.to_string(),
            port: p.clone(),
        })
    }

    pub fn endpoints(&self) -> impl Iterator<Item = (&String, &PortRef)> {
        self.endpoints.iter()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Highest origin sequence number this graph has applied.
    pub fn max_seq(&self) -> u64 {
        self.edges.values().map(|e| e.version.0).max().unwrap_or(0)
    }

    /// Topology equality ignoring holder-local bookkeeping.
    pub fn same_view(&self, other: &TopoGraph) -> bool {
        self.vertices == other.vertices && self.edges == other.edges
    }

    /// One update per span that has moved past its baseline.
    pub fn latest_updates(&self) -> Vec<LinkStateUpdate> {
        self.edges
            .values()
            .filter(|e| e.version.0 > 0)
            .map(|e| LinkStateUpdate {
                origin: e.version.1.clone(),
                span_id: e.span_id.clone(),
                state: e.state,
                cost: e.cost,
                origin_seq: e.version.0,
                announce: Some((e.from.clone(), e.to.clone())),
            })
            .collect()
    }

    /// Held updates for spans that were never announced.
    pub fn pending(&self) -> impl Iterator<Item = &LinkStateUpdate> {
        self.pending.values().flatten()
    }

    pub fn drain_pending(&mut self) -> Vec<LinkStateUpdate> {
        std::mem::take(&mut self.pending).into_values().flatten().collect()
    }

    /// Apply one update. Duplicates and updates older than the span's
    /// current `(seq, origin)` are no-ops.
    pub fn apply_update(&mut self, u: &LinkStateUpdate) -> ChangeSet {
        if !self.seen.insert((u.origin.clone(), u.origin_seq)) {
            return ChangeSet::default();
        }
        if !self.edges.contains_key(&u.span_id) {
            let Some((from, to)) = &u.announce else {
                self.pending.entry(u.span_id.clone()).or_default().push(u.clone());
                return ChangeSet::default();
            };
            self.add_edge(&u.span_id, from.clone(), to.clone(), u.cost);
            let mut changes = self.set_edge(u);
            if let Some(mut held) = self.pending.remove(&u.span_id) {
                held.sort_by(|a, b| (a.origin_seq, &a.origin).cmp(&(b.origin_seq, &b.origin)));
                for h in held {
                    if !self.set_edge(&h).is_empty() && changes.is_empty() {
                        changes.spans.push(h.span_id.clone());
                    }
                }
            }
            if changes.is_empty() {
                changes.spans.push(u.span_id.clone());
            }
            return changes;
        }
        self.set_edge(u)
    }

    fn set_edge(&mut self, u: &LinkStateUpdate) -> ChangeSet {
        let edge = self.edges.get_mut(&u.span_id).expect("caller checked");
        let incoming = (u.origin_seq, u.origin.clone());
        if incoming <= edge.version {
            return ChangeSet::default();
        }
        edge.version = incoming;
        if edge.state == u.state && edge.cost == u.cost {
            return ChangeSet::default();
        }
        edge.state = u.state;
        edge.cost = u.cost;
        self.version += 1;
        ChangeSet {
            spans: vec![u.span_id.clone()],
        }
    }

    /// Dijkstra over lit edges. Among equal-cost predecessors the one with
    /// the smallest `(vertex id, span id)` wins, so ties never depend on
    /// insertion order.
    pub fn compute_spt(&self, root: &SwitchId) -> ShortestPathTree {
        let mut tree = ShortestPathTree {
            root: root.clone(),
            parent: BTreeMap::new(),
            dist: BTreeMap::new(),
        };
        if !self.vertices.contains(root) {
            return tree;
        }
        let mut out: BTreeMap<&SwitchId, Vec<&Edge>> = BTreeMap::new();
        for e in self.edges.values().filter(|e| e.state == SpanState::Lit) {
            out.entry(&e.from.switch).or_default().push(e);
        }

        let mut done: BTreeSet<&SwitchId> = BTreeSet::new();
        let mut heap = BinaryHeap::new();
        tree.dist.insert(root.clone(), 0.0);
        heap.push(Reverse((Cost(0.0), root)));
        while let Some(Reverse((Cost(d), u))) = heap.pop() {
            if !done.insert(u) {
                continue;
            }
            for e in out.get(u).into_iter().flatten() {
                let v = &e.to.switch;
                if done.contains(v) {
                    continue;
                }
                let nd = d + e.cost;
                let better = match tree.dist.get(v) {
                    None => true,
                    Some(&cur) if nd < cur => true,
                    Some(&cur) if nd == cur => {
                        let (pv, ps) = &tree.parent[v];
                        (u, &e.span_id) < (pv, ps)
                    }
                    Some(_) => false,
                };
                if better {
                    let improved = tree.dist.get(v).is_none_or(|&cur| nd < cur);
                    tree.dist.insert(v.clone(), nd);
                    tree.parent.insert(v.clone(), (u.clone(), e.span_id.clone()));
                    if improved {
                        heap.push(Reverse((Cost(nd), v)));
                    }
                }
            }
        }
        tree
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Cost(f64);

impl Eq for Cost {}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShortestPathTree {
    pub root: SwitchId,
    pub parent: BTreeMap<SwitchId, (SwitchId, String)>,
    pub dist: BTreeMap<SwitchId, f64>,
}

impl ShortestPathTree {
    pub fn contains(&self, v: &SwitchId) -> bool {
        self.dist.contains_key(v)
    }

    pub fn dist(&self, v: &SwitchId) -> Option<f64> {
        self.dist.get(v).copied()
    }

    /// Span ids from the root down to `v`.
    pub fn spans_to(&self, v: &SwitchId) -> Option<Vec<String>> {
        if !self.contains(v) {
            return None;
        }
        let mut spans = Vec::new();
        let mut cur = v;
        while cur != &self.root {
            let (p, span) = self.parent.get(cur)?;
            spans.push(span.clone());
            cur = p;
        }
        spans.reverse();
        Some(spans)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Endpoint {
    pub host: String,
    pub port: PortRef,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Hop {
    pub switch: SwitchId,
    pub in_port: PortId,
    pub out_port: PortId,
}

impl fmt::Display for Hop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}>{}", self.switch, self.in_port, self.out_port)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Route {
    pub hops: Vec<Hop>,
    pub spans: Vec<String>,
    pub total_cost: f64,
}

impl Route {
    pub fn switches(&self) -> impl Iterator<Item = &SwitchId> {
        self.hops.iter().map(|h| &h.switch)
    }

    pub fn hops_on<'a>(&'a self, sw: &'a SwitchId) -> impl Iterator<Item = &'a Hop> + 'a {
        self.hops.iter().filter(move |h| &h.switch == sw)
    }

    /// Every (port, direction) the route occupies, in hop order.
    pub fn ports(&self) -> Vec<(PortRef, Direction)> {
        self.hops
            .iter()
            .flat_map(|h| {
                [
                    (
                        PortRef {
                            switch: h.switch.clone(),
                            port: h.in_port,
                        },
                        Direction::Ingress,
                    ),
                    (
                        PortRef {
                            switch: h.switch.clone(),
                            port: h.out_port,
                        },
                        Direction::Egress,
                    ),
                ]
            })
            .collect()
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hops: Vec<String> = self.hops.iter().map(Hop::to_string).collect();
        f.write_str(&hops.join(" "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PortStatus {
    Free,
    Busy,
    Dark,
}

/// What the caller knows about port occupancy and light.
pub trait PortView {
    fn status(&self, port: &PortRef, dir: Direction) -> PortStatus;
}

/// Treats every port as available.
pub struct AllFree;

impl PortView for AllFree {
    fn status(&self, _: &PortRef, _: Direction) -> PortStatus {
        PortStatus::Free
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RouteError {
    #[error("source and destination are the same endpoint")]
    SameEndpoint,
    #[error("tree is rooted at {root}, source is on {src}")]
    WrongRoot { root: SwitchId, src: SwitchId },
    #[error("{0} unreachable")]
    Unreachable(SwitchId),
    #[error("endpoint port {0} is dark")]
    EndpointDark(PortRef),
    #[error("port {0} busy")]
    PortBusy(PortRef),
}

pub fn extract_route(
    tree: &ShortestPathTree,
    graph: &TopoGraph,
    src: &Endpoint,
    dst: &Endpoint,
    view: &impl PortView,
) -> Result<Route, RouteError> {
    if src == dst || src.port == dst.port {
        return Err(RouteError::SameEndpoint);
    }
    if tree.root != src.port.switch {
        return Err(RouteError::WrongRoot {
            root: tree.root.clone(),
            src: src.port.switch.clone(),
        });
    }
    let spans = tree
        .spans_to(&dst.port.switch)
        .ok_or_else(|| RouteError::Unreachable(dst.port.switch.clone()))?;
    let edges: Vec<&Edge> = spans
        .iter()
        .map(|s| graph.edge(s).ok_or_else(|| RouteError::Unreachable(dst.port.switch.clone())))
        .collect::<Result<_, _>>()?;

    let mut hops = Vec::with_capacity(edges.len() + 1);
    for i in 0..=edges.len() {
        let switch = if i == 0 {
            src.port.switch.clone()
        } else {
            edges[i - 1].to.switch.clone()
        };
        let in_port = if i == 0 { src.port.port } else { edges[i - 1].to.port };
        let out_port = if i == edges.len() { dst.port.port } else { edges[i].from.port };
        hops.push(Hop {
            switch,
            in_port,
            out_port,
        });
    }

    match view.status(&src.port, Direction::Ingress) {
        PortStatus::Dark => return Err(RouteError::EndpointDark(src.port.clone())),
        PortStatus::Busy => return Err(RouteError::PortBusy(src.port.clone())),
        PortStatus::Free => {}
    }
    let route = Route {
        hops,
        spans,
        total_cost: tree.dist(&dst.port.switch).unwrap_or(0.0),
    };
    if let Some((port, _)) = route
        .ports()
        .into_iter()
        .find(|(p, d)| view.status(p, *d) == PortStatus::Busy)
    {
        return Err(RouteError::PortBusy(port));
    }
    Ok(route)
}
