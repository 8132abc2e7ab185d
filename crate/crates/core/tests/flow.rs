//! The modeled transfer dies exactly when its destination has been dark for
//! longer than the budget, and not before.

mod support;

use lightpath::cli::Scenario;
use lightpath::device::OpticalPlant;
use lightpath::simnet::{FaultKind, FaultSpec, NodeId, SimTime};
use lightpath::world::{FlowState, World, WorldConfig};
use support::{linear, FOUR_CUTS, TRANSATLANTIC};

fn four_cuts(budget: u64) -> World {
    let cfg = WorldConfig {
        tcp_budget_ms: budget,
        ..WorldConfig::default()
    };
    let sc = Scenario::parse(FOUR_CUTS).unwrap();
    let mut w = World::new(OpticalPlant::parse(TRANSATLANTIC).unwrap(), cfg).unwrap();
    sc.install(&mut w).unwrap();
    w.run_until(sc.end_time());
    w
}

#[test]
fn darkness_equal_to_the_budget_is_survived() {
    let w = four_cuts(10);
    let f = w.flows().values().next().unwrap();
    assert_eq!(f.state, FlowState::Alive);
    assert!(f.dark_intervals.iter().all(|(a, b)| b.since(*a) == 10));
}

#[test]
fn darkness_past_the_budget_kills_the_flow_at_budget_plus_one() {
    let w = four_cuts(5);
    let f = w.flows().values().next().unwrap();
    assert_eq!(f.state, FlowState::Dead);
    let dead = w.trace().of_kind("flow_dead").next().unwrap();
    // first cut at 2000
    assert_eq!(dead.time, SimTime(2006));
    assert_eq!(dead.field("dark_ms"), Some("6"));
}

/// Nobody alive sees the cut, so the destination stays dark until the
/// initiator's renewal round notices: the flow dies first.
#[test]
fn unnoticed_cut_outlasts_the_budget() {
    let mut w = World::new(linear(3), WorldConfig::default()).unwrap();
    w.submit("h0", "hN");
    w.run_for(100);
    for (at, kind) in [
        (100, FaultKind::CrashAgent(NodeId::from("agent-s1"))),
        (100, FaultKind::CrashAgent(NodeId::from("agent-s2"))),
        (100, FaultKind::FiberCut("l1".into())),
    ] {
        w.inject_fault(FaultSpec { kind, at: SimTime(at) }).unwrap();
    }
    w.run_for(10_000);
    let dead = w.trace().of_kind("flow_dead").next().unwrap();
    assert_eq!(dead.time, SimTime(100 + 2000 + 1));
    assert_eq!(w.flows()["flow-1"].state, FlowState::Dead);
}

/// Flow state recomputed from the trace's darkness records alone, ignoring
/// the model's own verdict records.
fn oracle(w: &World, flow: &str, budget: u64) -> FlowState {
    let mut dark_since = None;
    let mut state = FlowState::Alive;
    for r in w.trace().records().iter().filter(|r| r.field("flow") == Some(flow)) {
        match r.kind.as_str() {
            "flow_dark" => dark_since = Some(r.time),
            "flow_lit" | "flow_closed" => {
                if let Some(t) = dark_since.take() {
                    if r.time.since(t) > budget {
                        return FlowState::Dead;
                    }
                }
                if r.kind == "flow_closed" {
                    state = FlowState::Closed;
                }
            }
            _ => {}
        }
    }
    match dark_since {
        Some(t) if w.now().since(t) > budget => FlowState::Dead,
        _ => state,
    }
}

#[test]
fn flow_state_matches_the_trace_oracle_under_chaos() {
    use lightpath::cli::{random_schedule, ChaosConfig};
    let plant = OpticalPlant::parse(support::MESH).unwrap();
    let mut seen = [0usize; 3];
    for seed in 0..300 {
        let budget = [10, 500, 2000][seed as usize % 3];
        let sc = random_schedule(&plant, seed, &ChaosConfig::default());
        let cfg = WorldConfig {
            seed,
            tcp_budget_ms: budget,
            ..WorldConfig::default()
        };
        let mut w = World::new(plant.clone(), cfg).unwrap();
        sc.install(&mut w).unwrap();
        // stop mid-schedule too, so some flows are still alive or dark
        w.run_until(SimTime(6000 + seed * 31));
        for f in w.flows().values() {
            assert_eq!(f.state, oracle(&w, &f.flow_id, budget), "seed {seed} {}", f.flow_id);
            seen[f.state as usize] += 1;
        }
    }
    assert!(seen.iter().all(|&n| n > 0), "every flow state exercised: {seen:?}");
}
