//! Line commands against a loaded [`World`], stepped by hand.

use crate::cli::render::render_topology;
use crate::simnet::{FaultKind, FaultSpec, GroupName};
use crate::topology::TopoGraph;
use crate::world::{RequestOutcome, World};

pub const USAGE: &str = "commands:
  path create <src-host> <dst-host>
  path list
  path teardown <path-id>
  topo show
  discover <group>
  cut <span-or-link>
  restore <span-or-link>
  step <ms>
  help";

/// How long `path create` waits for the outcome before reporting pending.
const SETTLE_LIMIT_MS: u64 = 5000;

pub struct Shell {
    pub world: World,
}

impl Shell {
    pub fn new(world: World) -> Self {
        Shell { world }
    }

    /// Run one command line and return its textual response.
    pub fn exec(&mut self, line: &str) -> String {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] => String::new(),
            ["path", "create", src, dst] => self.create(src, dst),
            ["path", "list"] => self.list(),
            ["path", "teardown", id] => {
                let out = match self.world.teardown(id) {
                    Ok(()) => format!("teardown {id} sent"),
                    Err(e) => format!("rejected: {e}"),
                };
                let settle = 2 * self.world.config().latency_ms + 1;
                self.world.run_for(settle);
                out
            }
            ["topo", "show"] => {
                let g = TopoGraph::from_plant(self.world.plant());
                let paths: Vec<_> = self.world.lightpaths().collect();
                render_topology(&g, &paths).trim_end().to_string()
            }
            ["discover", group] => {
                let found = self.world.discover(&GroupName::from(*group));
                if found.is_empty() {
                    return format!("no services in {group}");
                }
                found
                    .iter()
                    .map(|d| {
                        let sw = d.attributes.get("switch").map_or("-", String::as_str);
                        format!("{} {} switch={sw}", d.node, d.kind)
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            }
            [verb @ ("cut" | "restore"), target] => {
                let kind = if *verb == "cut" {
                    FaultKind::FiberCut(target.to_string())
                } else {
                    FaultKind::FiberRestore(target.to_string())
                };
                let now = self.world.now();
                match self.world.inject_fault(FaultSpec { kind, at: now }) {
                    Ok(()) => {
                        self.world.run_until(now);
                        format!("{verb} {target} at {now}")
                    }
                    Err(e) => format!("error: {e}"),
                }
            }
            ["step", ms] => match ms.parse::<u64>() {
                Ok(ms) => {
                    self.world.run_for(ms);
                    format!("t={}", self.world.now())
                }
                Err(_) => format!("error: bad step {ms:?}\n{USAGE}"),
            },
            _ => USAGE.to_string(),
        }
    }

    fn create(&mut self, src: &str, dst: &str) -> String {
        let req = self.world.submit(src, dst);
        let deadline = self.world.now().plus(SETTLE_LIMIT_MS);
        while matches!(self.world.outcome(req), Some(RequestOutcome::Pending { .. }))
            && self.world.now() < deadline
        {
            self.world.run_for(1);
        }
        match self.world.outcome(req).cloned() {
            Some(RequestOutcome::Active { path_id }) => {
                let hops = self
                    .world
                    .lightpath(&path_id)
                    .map(|r| r.route.to_string())
                    .unwrap_or_default();
                format!("{path_id} {hops}")
            }
            Some(RequestOutcome::Pending { path_id, .. }) => format!("{path_id} pending"),
            Some(RequestOutcome::Rejected(r)) => format!("rejected: {r}"),
            Some(RequestOutcome::Failed(r)) => format!("failed: {r}"),
            Some(RequestOutcome::Lost) | None => "failed: agent unavailable".to_string(),
        }
    }

    fn list(&self) -> String {
        let lines: Vec<String> = self
            .world
            .lightpaths()
            .map(|r| format!("{} {} {}", r.path_id, r.state, r.route))
            .collect();
        if lines.is_empty() {
            "no paths".to_string()
        } else {
            lines.join("\n")
        }
    }
}
