//! Scenario files: timed client commands and faults, plus run settings and
//! end-of-run expectations.
//!
//! ```text
//! # comment
//! token <string>
//! latency <ms>
//! end <ms>
//! at <ms> request <src-host> <dst-host>
//! at <ms> teardown <path-id>
//! at <ms> teardown-all
//! at <ms> cut <span-or-link>
//! at <ms> restore <span-or-link>
//! at <ms> drop <probability> [from <node>] [to <node>] [until <ms>]
//! at <ms> partition <node,node..> <node,node..>
//! at <ms> heal <node,node..> <node,node..>
//! at <ms> crash <node>
//! at <ms> restart <node>
//! at <ms> fail-switch <switch>
//! at <ms> recover-switch <switch>
//! expect <metric-key> <value>
//! ```

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::agent::{agent_id, DEFAULT_PATH_LEASE_MS};
use crate::device::{OpticalPlant, SwitchId};
use crate::simnet::{DropRule, FaultKind, FaultSpec, NodeId, SimTime};
use crate::world::{Command, World, WorldError};

#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    Command(Command),
    Fault(FaultKind),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scenario {
    pub steps: Vec<(SimTime, Step)>,
    pub end: Option<SimTime>,
    pub latency: Option<u64>,
    pub token: Option<String>,
    pub expects: Vec<(String, String)>,
}

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut sc = Scenario::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |message: String| ScenarioError { line, message };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let toks: Vec<&str> = content.split_whitespace().collect();
            let ms = |s: &str| s.parse::<u64>().map_err(|_| err(format!("bad time {s:?}")));
            match toks.as_slice() {
                ["token", t] => sc.token = Some(t.to_string()),
                ["latency", n] => sc.latency = Some(ms(n)?),
                ["end", n] => sc.end = Some(SimTime(ms(n)?)),
                ["expect", key, value] => sc.expects.push((key.to_string(), value.to_string())),
                ["at", t, rest @ ..] => {
                    let at = SimTime(ms(t)?);
                    let step = parse_step(rest).map_err(err)?;
                    sc.steps.push((at, step));
                }
                _ => return Err(err(format!("unknown directive {content:?}"))),
            }
        }
        Ok(sc)
    }

    /// Explicit `end`, or three path leases past the last step.
    pub fn end_time(&self) -> SimTime {
        self.end.unwrap_or_else(|| match self.steps.iter().map(|(t, _)| *t).max() {
            Some(t) => t.plus(3 * DEFAULT_PATH_LEASE_MS),
            None => SimTime::ZERO,
        })
    }

    /// Schedule every step into `world`.
    pub fn install(&self, world: &mut World) -> Result<(), WorldError> {
        if let Some(l) = self.latency {
            world.set_latency(l);
        }
        for (at, step) in &self.steps {
            match step {
                Step::Command(c) => world.schedule(*at, c.clone())?,
                Step::Fault(kind) => world.inject_fault(FaultSpec {
                    kind: kind.clone(),
                    at: *at,
                })?,
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(t) = &self.token {
            out.push_str(&format!("token {t}\n"));
        }
        if let Some(l) = self.latency {
            out.push_str(&format!("latency {l}\n"));
        }
        for (at, step) in &self.steps {
            out.push_str(&format!("at {} {}\n", at.ms(), step_text(step)));
        }
        if let Some(e) = self.end {
            out.push_str(&format!("end {}\n", e.ms()));
        }
        for (k, v) in &self.expects {
            out.push_str(&format!("expect {k} {v}\n"));
        }
        out
    }
}

fn nodes(s: &str) -> BTreeSet<NodeId> {
    s.split(',').filter(|x| !x.is_empty()).map(NodeId::from).collect()
}

fn parse_step(toks: &[&str]) -> Result<Step, String> {
    let cmd = |c| Ok(Step::Command(c));
    let fault = |f| Ok(Step::Fault(f));
    match toks {
        ["request", src, dst] => cmd(Command::Request {
            src: src.to_string(),
            dst: dst.to_string(),
        }),
        ["teardown", p] => cmd(Command::Teardown {
            path_id: p.to_string(),
        }),
        ["teardown-all"] => cmd(Command::TeardownAll),
        ["fail-switch", s] => cmd(Command::FailSwitch {
            switch: SwitchId::from(*s),
            failed: true,
        }),
        ["recover-switch", s] => cmd(Command::FailSwitch {
            switch: SwitchId::from(*s),
            failed: false,
        }),
        ["cut", t] => fault(FaultKind::FiberCut(t.to_string())),
        ["restore", t] => fault(FaultKind::FiberRestore(t.to_string())),
        ["crash", n] => fault(FaultKind::CrashAgent(NodeId::from(*n))),
        ["restart", n] => fault(FaultKind::RestartAgent(NodeId::from(*n))),
        ["partition", a, b] => fault(FaultKind::Partition(nodes(a), nodes(b))),
        ["heal", a, b] => fault(FaultKind::HealPartition(nodes(a), nodes(b))),
        ["drop", p, opts @ ..] => {
            let probability: f64 = p.parse().map_err(|_| format!("bad probability {p:?}"))?;
            let mut rule = DropRule {
                probability,
                from: None,
                to: None,
                until: None,
            };
            for pair in opts.chunks(2) {
                match pair {
                    ["from", n] => rule.from = Some(NodeId::from(*n)),
                    ["to", n] => rule.to = Some(NodeId::from(*n)),
                    ["until", t] => {
                        rule.until = Some(SimTime(t.parse().map_err(|_| format!("bad time {t:?}"))?))
                    }
                    other => return Err(format!("bad drop option {other:?}")),
                }
            }
            fault(FaultKind::DropMessages(rule))
        }
        _ => Err(format!("unknown step {:?}", toks.join(" "))),
    }
}

fn step_text(step: &Step) -> String {
    let set = |s: &BTreeSet<NodeId>| s.iter().map(NodeId::as_str).collect::<Vec<_>>().join(",");
    match step {
        Step::Command(Command::Request { src, dst }) => format!("request {src} {dst}"),
        Step::Command(Command::Teardown { path_id }) => format!("teardown {path_id}"),
        Step::Command(Command::TeardownAll) => "teardown-all".into(),
        Step::Command(Command::FailSwitch { switch, failed: true }) => format!("fail-switch {switch}"),
        Step::Command(Command::FailSwitch { switch, failed: false }) => format!("recover-switch {switch}"),
        Step::Fault(FaultKind::FiberCut(t)) => format!("cut {t}"),
        Step::Fault(FaultKind::FiberRestore(t)) => format!("restore {t}"),
        Step::Fault(FaultKind::CrashAgent(n)) => format!("crash {n}"),
        Step::Fault(FaultKind::RestartAgent(n)) => format!("restart {n}"),
        Step::Fault(FaultKind::Partition(a, b)) => format!("partition {} {}", set(a), set(b)),
        Step::Fault(FaultKind::HealPartition(a, b)) => format!("heal {} {}", set(a), set(b)),
        Step::Fault(FaultKind::DropMessages(r)) => {
            let mut s = format!("drop {}", r.probability);
            if let Some(f) = &r.from {
                s.push_str(&format!(" from {f}"));
            }
            if let Some(t) = &r.to {
                s.push_str(&format!(" to {t}"));
            }
            if let Some(u) = r.until {
                s.push_str(&format!(" until {}", u.ms()));
            }
            s
        }
    }
}

/// Knobs for [`random_schedule`].
#[derive(Clone, Debug)]
pub struct ChaosConfig {
    pub requests: std::ops::RangeInclusive<usize>,
    pub faults: std::ops::RangeInclusive<usize>,
    /// Faults start before this time; every crash and cut is undone by
    /// `fault_window + max_outage`.
    pub fault_window: u64,
    pub max_outage: u64,
    pub max_drop: f64,
    pub path_lease_ms: u64,
}

impl Default for ChaosConfig {
    fn default() -> Self {
        ChaosConfig {
            requests: 2..=5,
            faults: 2..=6,
            fault_window: 8000,
            max_outage: 4000,
            max_drop: 0.2,
            path_lease_ms: DEFAULT_PATH_LEASE_MS,
        }
    }
}

/// A seeded schedule of requests and faults (fiber cuts, message drops,
/// agent crashes) that ends with every path torn down and then runs three
/// path leases so stragglers can expire.
pub fn random_schedule(plant: &OpticalPlant, seed: u64, cfg: &ChaosConfig) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hosts: Vec<&str> = plant.hosts().map(|h| h.name.as_str()).collect();
    let links: Vec<String> = plant
        .spans()
        .map(|s| s.link_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let agents: Vec<NodeId> = plant.switches().map(|s| agent_id(&s.id)).collect();
    let mut steps = Vec::new();

    for _ in 0..rng.gen_range(cfg.requests.clone()) {
        let pair: Vec<&&str> = hosts.choose_multiple(&mut rng, 2).collect();
        if pair.len() < 2 {
            break;
        }
        let at = SimTime(rng.gen_range(0..cfg.fault_window / 4));
        steps.push((
            at,
            Step::Command(Command::Request {
                src: pair[0].to_string(),
                dst: pair[1].to_string(),
            }),
        ));
    }

    for _ in 0..rng.gen_range(cfg.faults.clone()) {
        let at = SimTime(rng.gen_range(0..cfg.fault_window));
        let outage = rng.gen_range(200..=cfg.max_outage);
        match rng.gen_range(0..3) {
            0 if !links.is_empty() => {
                let link = links.choose(&mut rng).expect("non-empty").clone();
                steps.push((at, Step::Fault(FaultKind::FiberCut(link.clone()))));
                steps.push((at.plus(outage), Step::Fault(FaultKind::FiberRestore(link))));
            }
            1 => {
                let from = if rng.gen_bool(0.5) {
                    agents.choose(&mut rng).cloned()
                } else {
                    None
                };
                let rule = DropRule {
                    probability: rng.gen_range(0.01..=cfg.max_drop),
                    from,
                    to: None,
                    until: Some(at.plus(outage)),
                };
                steps.push((at, Step::Fault(FaultKind::DropMessages(rule))));
            }
            _ => {
                let Some(node) = agents.choose(&mut rng).cloned() else {
                    continue;
                };
                steps.push((at, Step::Fault(FaultKind::CrashAgent(node.clone()))));
                steps.push((at.plus(outage), Step::Fault(FaultKind::RestartAgent(node))));
            }
        }
    }

    let settle = SimTime(cfg.fault_window + cfg.max_outage + 500);
    steps.push((settle, Step::Command(Command::TeardownAll)));
    steps.sort_by_key(|(t, _)| *t);
    Scenario {
        steps,
        end: Some(settle.plus(3 * cfg.path_lease_ms)),
        latency: None,
        token: None,
        expects: vec![("owned_cross_connects".into(), "0".into())],
    }
}
