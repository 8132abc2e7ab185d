//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Run with `cargo test --release --test acceptance`.

mod support;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lightpath::agent::PathState;
use lightpath::cli::{random_schedule, ChaosConfig, Scenario};
use lightpath::device::{OpticalPlant, SwitchId};
use lightpath::lookup::NotificationKind;
use lightpath::simnet::{probe_fabric, throughput_probe, FaultKind, FaultSpec, NodeId};
use lightpath::world::{FlowState, RequestOutcome, World, WorldConfig};
use support::{linear, Digraph, FOUR_CUTS, MESH, TRANSATLANTIC};

type Outcome = Result<String, String>;

fn world(plant: OpticalPlant, seed: u64) -> World {
    World::new(plant, WorldConfig { seed, ..WorldConfig::default() }).expect("world builds")
}

fn within(limit: Duration, started: Instant, ok: String) -> Outcome {
    let took = started.elapsed();
    if took < limit {
        Ok(format!("{ok}, {took:.2?}"))
    } else {
        Err(format!("{ok}, but took {took:.2?} (limit {limit:?})"))
    }
}

// ---- 1 ----

fn setup_run(n: usize) -> World {
    let mut w = world(linear(n), 1);
    w.submit("h0", "hN");
    w.run_for(1000);
    w
}

fn c1_constant_depth(traces: &mut Vec<String>) -> Outcome {
    let started = Instant::now();
    let mut seen = Vec::new();
    for n in [3, 5, 10] {
        let w = setup_run(n);
        let commit = w
            .trace()
            .of_kind("txn_commit")
            .next()
            .ok_or(format!("{n} switches: nothing committed"))?;
        let depth: u32 = commit.field("depth").unwrap_or("0").parse().unwrap_or(0);
        let latency: u64 = commit.field("latency").unwrap_or("0").parse().unwrap_or(0);
        if depth != 2 {
            return Err(format!("{n} switches: depth {depth}, want 2"));
        }
        seen.push((n, latency));
        traces.push(w.trace().to_tsv());
    }
    if seen.iter().any(|(_, l)| *l != seen[0].1) {
        return Err(format!("latency differs across sizes: {seen:?}"));
    }
    within(
        Duration::from_secs(1),
        started,
        format!("depth 2, latency {} ms at 3/5/10 switches", seen[0].1),
    )
}

// ---- 2 ----

fn four_cuts_run() -> World {
    let scenario = Scenario::parse(FOUR_CUTS).expect("bundled scenario parses");
    let mut w = world(OpticalPlant::parse(TRANSATLANTIC).unwrap(), 0);
    scenario.install(&mut w).expect("scenario installs");
    w.run_until(scenario.end_time());
    w
}

fn c2_four_cuts(traces: &mut Vec<String>) -> Outcome {
    let started = Instant::now();
    let w = four_cuts_run();
    traces.push(w.trace().to_tsv());
    let reroutes: Vec<_> = w.trace().of_kind("reroute_ok").collect();
    if reroutes.len() != 4 {
        return Err(format!("{} reroutes, want 4", reroutes.len()));
    }
    let ids: BTreeSet<_> = reroutes.iter().map(|r| r.field("path")).collect();
    let paths: Vec<_> = w.lightpaths().collect();
    if ids.len() != 1 || paths.len() != 1 || ids.first() != Some(&Some(paths[0].path_id.as_str())) {
        return Err(format!("path ids changed: {ids:?}"));
    }
    let flow = w.flows().values().next().ok_or("no flow")?;
    if flow.state != FlowState::Alive {
        return Err(format!("flow {:?}", flow.state));
    }
    let longest = flow
        .dark_intervals
        .iter()
        .map(|(a, b)| b.since(*a))
        .max()
        .unwrap_or(0);
    if longest >= 2000 {
        return Err(format!("dark for {longest} ms"));
    }
    within(
        Duration::from_secs(1),
        started,
        format!("4 reroutes of {}, flow alive, longest dark {longest} ms", paths[0].path_id),
    )
}

// ---- 3 ----

fn chaos_run(plant: &OpticalPlant, seed: u64) -> World {
    let scenario = random_schedule(plant, seed, &ChaosConfig::default());
    let mut w = world(plant.clone(), seed);
    scenario.install(&mut w).expect("schedule installs");
    w.run_until(scenario.end_time());
    w
}

const CHAOS_SEEDS: u64 = 1000;

fn c3_no_orphans(traces: &mut Vec<String>) -> Outcome {
    let started = Instant::now();
    let plant = OpticalPlant::parse(MESH).unwrap();
    let mut faults = 0;
    for seed in 0..CHAOS_SEEDS {
        let w = chaos_run(&plant, seed);
        faults += w.trace().of_kind("fault").count();
        let left = w.plant().owned_cross_connects();
        if !left.is_empty() {
            return Err(format!("seed {seed}: {left:?}"));
        }
        traces.push(w.trace().to_tsv());
    }
    within(
        Duration::from_secs(60),
        started,
        format!("{CHAOS_SEEDS} schedules, {faults} faults, no owned cross-connect left"),
    )
}

// ---- 4 ----

fn nack_run(participant: usize) -> World {
    let mut w = world(linear(5), 4);
    w.set_switch_failed(&SwitchId::new(format!("s{participant}")), true).unwrap();
    w.submit_to(&NodeId::from("agent-s0"), "h0", "hN");
    w.run_for(2000);
    w
}

fn c4_rollback(traces: &mut Vec<String>) -> Outcome {
    for p in 1..=4 {
        let mut w = nack_run(p);
        traces.push(w.trace().to_tsv());
        let begin = w.trace().of_kind("txn_begin").next().ok_or("no transaction")?;
        if begin.field("participants") != Some("4") {
            return Err(format!("want 4 participants, got {:?}", begin.field("participants")));
        }
        if !matches!(w.outcome(1), Some(RequestOutcome::Failed(_))) {
            return Err(format!("s{p} nacks: outcome {:?}", w.outcome(1)));
        }
        let residue: Vec<_> = w
            .plant()
            .switches()
            .flat_map(|s| s.cross_connects().iter().map(move |x| (s.id.clone(), x.clone())))
            .collect();
        if !residue.is_empty() {
            return Err(format!("s{p} nacks: residue {residue:?}"));
        }
        if let Some(a) = w.agents().find(|a| a.locks().next().is_some() || !a.local_paths().is_empty()) {
            return Err(format!("s{p} nacks: {} still holds ports", a.id()));
        }
        // every port really is free: the same request now commits
        w.set_switch_failed(&SwitchId::new(format!("s{p}")), false).unwrap();
        let again = w.submit_to(&NodeId::from("agent-s0"), "h0", "hN");
        w.run_for(100);
        if !matches!(w.outcome(again), Some(RequestOutcome::Active { .. })) {
            return Err(format!("s{p} nacks: retry {:?}", w.outcome(again)));
        }
    }
    Ok("each of 4 participants nacking leaves zero cross-connects and free ports".into())
}

// ---- 5 ----

fn from_trits(pairs: &[(usize, usize)], mut code: u64, graph: &mut Digraph) {
    for &(u, v) in pairs {
        graph.cost[u][v] = (code % 3) as u32;
        code /= 3;
    }
}

fn ordered_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|u| (0..n).filter(move |&v| v != u).map(move |v| (u, v)))
        .collect()
}

/// Every digraph on up to four vertices, each checked from `v0` and from a
/// second root.
fn small_graphs_exhaustive() -> Result<u64, String> {
    let mut checked = 0;
    for n in 1..=4usize {
        let pairs = ordered_pairs(n);
        for code in 0..3u64.pow(pairs.len() as u32) {
            let mut g = Digraph { cost: vec![vec![0; n]; n] };
            from_trits(&pairs, code, &mut g);
            g.check(0)?;
            g.check((code % n as u64) as usize)?;
            checked += 1;
        }
    }
    Ok(checked)
}

/// Five-vertex digraphs rooted at `v0`, one per class under relabeling the
/// other four vertices: the root's out-costs are taken in sorted order and
/// every configuration of the twelve inner edges is enumerated. The four
/// edges into the root cannot change a distance from it, so their 81
/// configurations are cycled across the classes rather than multiplied in.
fn five_vertex_classes() -> Result<u64, String> {
    let inner: Vec<(usize, usize)> = ordered_pairs(5).into_iter().filter(|&(u, v)| u != 0 && v != 0).collect();
    let into_root: Vec<(usize, usize)> = (1..5).map(|v| (v, 0)).collect();
    let mut checked = 0u64;
    let mut g = Digraph { cost: vec![vec![0; 5]; 5] };
    for a in 0..3u32 {
        for b in a..3 {
            for c in b..3 {
                for d in c..3 {
                    g.cost[0][1..5].copy_from_slice(&[a, b, c, d]);
                    for code in 0..3u64.pow(12) {
                        from_trits(&inner, code, &mut g);
                        from_trits(&into_root, checked % 81, &mut g);
                        g.check(0)?;
                        checked += 1;
                    }
                }
            }
        }
    }
    Ok(checked)
}

fn random_digraphs(count: usize, seed: u64) -> impl Iterator<Item = Digraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(move |_| {
        let n = rng.gen_range(1..=8usize);
        let density: f64 = rng.gen_range(0.1..0.9);
        let cost = (0..n)
            .map(|u| {
                (0..n)
                    .map(|v| if u != v && rng.gen_bool(density) { rng.gen_range(1..=5) } else { 0 })
                    .collect()
            })
            .collect();
        Digraph { cost }
    })
}

/// Tree distances of the random sample, as text for the determinism check.
fn random_spt_digest() -> String {
    random_digraphs(200, 55)
        .map(|g| {
            let tree = g.to_topo().compute_spt(&SwitchId::from("v0"));
            format!("{:?}\n", tree.dist)
        })
        .collect()
}

fn c5_dijkstra(traces: &mut Vec<String>) -> Outcome {
    let started = Instant::now();
    let small = small_graphs_exhaustive()?;
    let five = five_vertex_classes()?;
    let mut random = 0;
    for (i, g) in random_digraphs(10_000, 5).enumerate() {
        g.check(i % g.n())?;
        random += 1;
    }
    traces.push(random_spt_digest());
    within(
        Duration::from_secs(120),
        started,
        format!("{small} graphs on <=4 vertices, {five} five-vertex classes, {random} random"),
    )
}

// ---- 6 ----

fn disjoint_run() -> World {
    let mut w = world(OpticalPlant::parse(MESH).unwrap(), 6);
    w.submit("a1", "b1");
    w.submit("d1", "e1");
    w.run_for(1000);
    w
}

/// `(a, b)` sources and destinations whose routes share exactly the port
/// slots named by the label, on a three-switch line.
type Request = (&'static str, &'static str);

const SHARED: &[(&str, Request, Request)] = &[
    ("s0:1 in", ("h0", "hN"), ("h0", "x0")),
    ("s0:3 out / s1:2 in", ("h0", "hN"), ("x0", "x1")),
    ("s1:3 out / s2:2 in", ("h0", "hN"), ("x1", "x2")),
    ("s2:1 out", ("h0", "hN"), ("x2", "hN")),
];

fn shared_run(case: usize, swap: bool) -> World {
    let (_, a, b) = SHARED[case];
    let (first, second) = if swap { (b, a) } else { (a, b) };
    let mut w = world(linear(3), 60 + case as u64);
    w.submit(first.0, first.1);
    w.submit(second.0, second.1);
    w.run_for(2000);
    w
}

fn c6_parallel(traces: &mut Vec<String>) -> Outcome {
    let w = disjoint_run();
    traces.push(w.trace().to_tsv());
    let active = w
        .outcomes()
        .values()
        .filter(|o| matches!(o, RequestOutcome::Active { .. }))
        .count();
    if active != 2 {
        return Err(format!("disjoint: {active} of 2 committed: {:?}", w.outcomes()));
    }
    let waits = ["xconn_refused", "txn_rollback", "request_rejected", "reroute_busy"];
    if let Some(r) = waits.iter().flat_map(|k| w.trace().of_kind(k)).next() {
        return Err(format!("disjoint: contention recorded: {} {}", r.kind, r.detail));
    }
    let latencies: BTreeSet<_> = w.trace().of_kind("txn_commit").map(|r| r.field("latency").map(str::to_string)).collect();
    if latencies.len() != 1 {
        return Err(format!("disjoint: commit latencies differ: {latencies:?}"));
    }
    for (case, (label, _, _)) in SHARED.iter().enumerate() {
        for swap in [false, true] {
            let w = shared_run(case, swap);
            traces.push(w.trace().to_tsv());
            let active: Vec<_> = w.lightpaths().filter(|p| p.state == PathState::Active).collect();
            if active.len() > 1 {
                return Err(format!("shared {label}: both committed"));
            }
            let owned = w.plant().owned_cross_connects().len();
            let expect: usize = active.iter().map(|p| p.route.hops.len()).sum();
            if owned != expect {
                return Err(format!("shared {label}: {owned} cross-connects for {expect} hops"));
            }
        }
    }
    Ok(format!(
        "disjoint pair committed without contention; {} shared-port placements never both commit",
        SHARED.len() * 2
    ))
}

// ---- 7 ----

fn lease_run() -> World {
    let mut w = world(linear(3), 7);
    let watchers: Vec<NodeId> = ["watch-a", "watch-b"]
        .iter()
        .map(|n| w.add_client(n).unwrap())
        .collect();
    for c in &watchers {
        w.subscribe(c, None);
    }
    w.run_for(12_345);
    let now = w.now();
    w.inject_fault(FaultSpec {
        kind: FaultKind::CrashAgent(NodeId::from("agent-s1")),
        at: now,
    })
    .unwrap();
    w.run_for(w.config().registration_lease_ms);
    w
}

fn c7_lease(traces: &mut Vec<String>) -> Outcome {
    let w = lease_run();
    traces.push(w.trace().to_tsv());
    let crashed_at = w.trace().of_kind("fault").next().ok_or("no crash")?.time;
    let group = w.config().agent.group.clone();
    if w.discover(&group).iter().any(|d| d.node.as_str() == "agent-s1") {
        return Err("still discoverable one lease after the crash".into());
    }
    let expired = w
        .trace()
        .of_kind("lease_expired")
        .find(|r| r.node == "agent-s1")
        .ok_or("registration never expired")?;
    let lag = expired.time.since(crashed_at);
    for watcher in ["watch-a", "watch-b"] {
        let got = w
            .trace()
            .of_kind("notice")
            .filter(|r| r.node == watcher)
            .filter(|r| r.field("kind") == Some(&NotificationKind::LeaseExpired.to_string()))
            .filter(|r| r.field("subject") == Some("agent-s1"))
            .count();
        if got != 1 {
            return Err(format!("{watcher} got {got} expiry notices"));
        }
    }
    Ok(format!("gone {lag} ms after crash, one expiry notice per subscriber"))
}

// ---- 8 ----

fn c8_throughput(traces: &mut Vec<String>) -> Outcome {
    let rate = throughput_probe(10_000);
    traces.push(probe_fabric(2000, 8).trace().to_tsv());
    if rate > 1000.0 {
        Ok(format!("{rate:.0} msg/s"))
    } else {
        Err(format!("{rate:.0} msg/s"))
    }
}

// ---- 9 ----

type Criterion = fn(&mut Vec<String>) -> Outcome;

const CRITERIA: [(&str, Criterion); 8] = [
    ("constant-depth setup", c1_constant_depth),
    ("four-cut reroute", c2_four_cuts),
    ("no orphan cross-connects", c3_no_orphans),
    ("rollback atomicity", c4_rollback),
    ("shortest-path oracle", c5_dijkstra),
    ("parallel disjoint requests", c6_parallel),
    ("registration lease expiry", c7_lease),
    ("fabric throughput", c8_throughput),
];

/// Reruns every scenario of criteria 1 to 8, writes both trace sets to
/// files, and compares them byte for byte.
fn c9_determinism(first: &[Vec<String>]) -> Outcome {
    let mut again: Vec<Vec<String>> = Vec::new();
    let mut t = Vec::new();
    for n in [3, 5, 10] {
        t.push(setup_run(n).trace().to_tsv());
    }
    again.push(std::mem::take(&mut t));
    again.push(vec![four_cuts_run().trace().to_tsv()]);
    let plant = OpticalPlant::parse(MESH).unwrap();
    again.push((0..CHAOS_SEEDS).map(|s| chaos_run(&plant, s).trace().to_tsv()).collect());
    again.push((1..=4).map(|p| nack_run(p).trace().to_tsv()).collect());
    again.push(vec![random_spt_digest()]);
    let mut six = vec![disjoint_run().trace().to_tsv()];
    for case in 0..SHARED.len() {
        for swap in [false, true] {
            six.push(shared_run(case, swap).trace().to_tsv());
        }
    }
    again.push(six);
    again.push(vec![lease_run().trace().to_tsv()]);
    again.push(vec![probe_fabric(2000, 8).trace().to_tsv()]);

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = 0;
    for (c, (a, b)) in first.iter().zip(&again).enumerate() {
        if a.len() != b.len() {
            return Err(format!("criterion {}: {} traces then {}", c + 1, a.len(), b.len()));
        }
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            let pa = dir.path().join(format!("c{}-{i}.a.tsv", c + 1));
            let pb = dir.path().join(format!("c{}-{i}.b.tsv", c + 1));
            std::fs::write(&pa, x).map_err(|e| e.to_string())?;
            std::fs::write(&pb, y).map_err(|e| e.to_string())?;
            let (ra, rb) = (std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
            if ra != rb {
                return Err(format!("criterion {} trace {i} differs on rerun", c + 1));
            }
            files += 1;
        }
    }
    Ok(format!("{files} trace files byte-identical on rerun"))
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; listing is
    // the only one that changes behavior.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut failed = 0;
    let mut traces = Vec::new();
    let report = |i: usize, name: &str, out: &Outcome| match out {
        Ok(msg) => println!("PASS {i} {name}: {msg}"),
        Err(msg) => println!("FAIL {i} {name}: {msg}"),
    };
    for (i, (name, run)) in CRITERIA.iter().enumerate() {
        let mut t = Vec::new();
        let out = run(&mut t);
        report(i + 1, name, &out);
        failed += usize::from(out.is_err());
        traces.push(t);
    }
    let out = c9_determinism(&traces);
    report(9, "determinism", &out);
    failed += usize::from(out.is_err());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
