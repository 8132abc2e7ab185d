//! Run summary computed from the trace alone, so a saved trace reproduces
//! the live numbers exactly.

use std::collections::{BTreeMap, BTreeSet};

use crate::simnet::EventTrace;

/// Sorted `key -> value`; zero counters are omitted.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MetricsRecord(pub BTreeMap<String, String>);

impl MetricsRecord {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// Numeric value, with absent keys read as zero.
    pub fn count(&self, key: &str) -> u64 {
        self.get(key).and_then(|v| v.parse().ok()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// One `key=value` per line.
    pub fn to_text(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str) -> MetricsRecord {
        MetricsRecord(
            text.lines()
                .filter_map(|l| l.split_once('='))
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }
}

const COUNTERS: &[(&str, &str)] = &[
    ("txn_commit", "commits"),
    ("txn_rollback", "rollbacks"),
    ("reroute_ok", "reroutes"),
    ("path_torn_down", "teardowns"),
    ("path_lease_expired", "path_lease_expiries"),
    ("lease_expired", "registration_expiries"),
    ("request_rejected", "requests_rejected"),
    ("request_lost", "requests_lost"),
    ("flow_start", "flows_started"),
    ("flow_dead", "flows_dead"),
    ("flow_closed", "flows_closed"),
    ("drop", "messages_dropped"),
    ("reconcile_teardown", "reconciled_cross_connects"),
];

pub fn compute(trace: &EventTrace) -> MetricsRecord {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut m: BTreeMap<String, String> = BTreeMap::new();
    let mut active: BTreeSet<String> = BTreeSet::new();
    let mut max_dark: BTreeMap<String, u64> = BTreeMap::new();
    let mut made: i64 = 0;

    for r in trace.records() {
        if let Some((_, name)) = COUNTERS.iter().find(|(k, _)| *k == r.kind) {
            *counts.entry(name.to_string()).or_default() += 1;
        }
        match r.kind.as_str() {
            "send" if r.field("type").is_some() => *counts.entry("messages_sent".into()).or_default() += 1,
            "txn_commit" if r.field("purpose") == Some("setup") => {
                let path = r.field("path").unwrap_or("?");
                for (field, key) in [("depth", "setup_depth"), ("latency", "setup_latency_ms")] {
                    if let Some(v) = r.field(field) {
                        m.insert(format!("path.{path}.{key}"), v.to_string());
                    }
                }
            }
            "path_active" => {
                active.insert(r.field("path").unwrap_or("?").to_string());
            }
            "path_torn_down" => {
                active.remove(r.field("path").unwrap_or("?"));
            }
            "reroute_ok" => {
                let path = r.field("path").unwrap_or("?");
                *counts.entry(format!("path.{path}.reroutes")).or_default() += 1;
            }
            "flow_lit" | "flow_dead" => {
                let flow = r.field("flow").unwrap_or("?").to_string();
                let dark: u64 = r.field("dark_ms").and_then(|v| v.parse().ok()).unwrap_or(0);
                *counts.entry(format!("flow.{flow}.dark_intervals")).or_default() += 1;
                let e = max_dark.entry(flow).or_default();
                *e = (*e).max(dark);
            }
            "xconn_made" => made += 1,
            "xconn_torn" | "reconcile_teardown" => made -= 1,
            _ => {}
        }
    }

    let c = |k: &str| counts.get(k).copied().unwrap_or(0);
    let alive = c("flows_started").saturating_sub(c("flows_dead") + c("flows_closed"));
    counts.insert("flows_alive".into(), alive);
    counts.insert("paths_active".into(), active.len() as u64);
    counts.insert("owned_cross_connects".into(), made.max(0) as u64);
    for (flow, d) in max_dark {
        counts.insert(format!("flow.{flow}.max_dark_ms"), d);
    }
    for (k, v) in counts {
        if v != 0 {
            m.insert(k, v.to_string());
        }
    }
    MetricsRecord(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::SimTime;

    #[test]
    fn empty_trace_gives_empty_metrics() {
        assert!(compute(&EventTrace::default()).is_empty());
    }

    #[test]
    fn counts_and_per_path_values() {
        let mut t = EventTrace::default();
        t.push(SimTime(0), "txn_commit", "a", "txn=1 path=a/1 purpose=setup depth=2 latency=20");
        t.push(SimTime(0), "path_active", "a", "path=a/1 req=1");
        t.push(SimTime(5), "reroute_ok", "a", "path=a/1 count=1");
        t.push(SimTime(6), "flow_lit", "-", "flow=flow-1 path=a/1 dark_ms=20");
        t.push(SimTime(7), "flow_lit", "-", "flow=flow-1 path=a/1 dark_ms=30");
        let m = compute(&t);
        assert_eq!(m.get("path.a/1.setup_depth"), Some("2"));
        assert_eq!(m.get("path.a/1.setup_latency_ms"), Some("20"));
        assert_eq!(m.count("reroutes"), 1);
        assert_eq!(m.count("paths_active"), 1);
        assert_eq!(m.count("flow.flow-1.max_dark_ms"), 30);
        assert_eq!(m.count("flow.flow-1.dark_intervals"), 2);
        assert_eq!(MetricsRecord::parse(&m.to_text()), m);
        let keys: Vec<_> = m.0.keys().collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }
}
