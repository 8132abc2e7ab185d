//! Emulated layer-1 optical switches and the fiber plant between them.
//!
//! Light is modeled transparently: transmitting hosts are the only sources,
//! a cross-connect passes light from its input port to its output port, and
//! a lit span carries light from its `from` port to its `to` port. Both
//! endpoints of a cut span read as dark regardless of upstream light.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::simnet::SimTime;

pub const LIT_DBM: f64 = 0.0;
pub const DARK_DBM: f64 = -40.0;
pub const LOSS_OF_LIGHT_THRESHOLD_DBM: f64 = -25.0;
pub const DEFAULT_SPAN_COST: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SwitchId(String);

impl SwitchId {
    pub fn new(name: impl Into<String>) -> Self {
        SwitchId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for SwitchId {
    fn from(s: &str) -> Self {
        SwitchId(s.to_string())
    }
}

impl fmt::Display for SwitchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// 1-based port index on a switch.
pub type PortId = u32;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortRef {
    pub switch: SwitchId,
    pub port: PortId,
}

impl PortRef {
    pub fn new(switch: impl Into<String>, port: PortId) -> Self {
        PortRef {
            switch: SwitchId::new(switch),
            port,
        }
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.switch, self.port)
    }
}

/// Direction of light through a port relative to the switch fabric.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    /// Light entering the switch at this port.
    Ingress,
    /// Light leaving the switch at this port.
    Egress,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpanState {
    Lit,
    Cut,
}

impl fmt::Display for SpanState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpanState::Lit => "lit",
            SpanState::Cut => "cut",
        })
    }
}

/// A simplex fiber. Duplex links are two spans sharing a `link_id`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberSpan {
    pub span_id: String,
    pub link_id: String,
    pub from: PortRef,
    pub to: PortRef,
    pub cost: f64,
    pub state: SpanState,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrossConnect {
    pub in_port: PortId,
    pub out_port: PortId,
    pub owner_path: Option<String>,
    pub created_at: SimTime,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PortReading {
    pub port: PortRef,
    pub power_dbm: f64,
    pub light_present: bool,
    pub at: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Severity {
    Critical,
    Major,
    Minor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlarmKind {
    LossOfLight,
    XconnFailure,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AlarmSubject {
    Port(PortRef),
    Span(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlarmRecord {
    pub severity: Severity,
    pub kind: AlarmKind,
    pub subject: AlarmSubject,
    pub at: SimTime,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Host {
    pub name: String,
    pub attached: PortRef,
    pub transmitting: bool,
}

#[derive(Clone, Debug)]
pub struct Switch {
    pub id: SwitchId,
    pub port_count: PortId,
    cross_connects: Vec<CrossConnect>,
    alarms: Vec<AlarmRecord>,
    failed: bool,
}

impl Switch {
    pub fn cross_connects(&self) -> &[CrossConnect] {
        &self.cross_connects
    }

    pub fn alarms(&self) -> &[AlarmRecord] {
        &self.alarms
    }

    pub fn is_failed(&self) -> bool {
        self.failed
    }

    fn has_loss_of_light(&self, port: &PortRef) -> bool {
        self.alarms.iter().any(|a| {
            a.kind == AlarmKind::LossOfLight && a.subject == AlarmSubject::Port(port.clone())
        })
    }
}

/// Everything an agent sees when it polls its switch.
#[derive(Clone, Debug, PartialEq)]
pub struct MonitorSnapshot {
    pub switch: SwitchId,
    pub at: SimTime,
    pub readings: Vec<PortReading>,
    pub cross_connects: Vec<CrossConnect>,
    pub alarms: Vec<AlarmRecord>,
}

impl MonitorSnapshot {
    pub fn reading(&self, port: PortId) -> Option<&PortReading> {
        self.readings.iter().find(|r| r.port.port == port)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LightChange {
    LossOfLight,
    Restored,
}

/// Pushed to the agent controlling `switch` when a span ending there
/// changes state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LightEvent {
    pub switch: SwitchId,
    pub span_id: String,
    pub port: PortId,
    pub change: LightChange,
}

#[derive(Debug, Error, PartialEq)]
pub enum DeviceError {
    #[error("unknown switch {0}")]
    UnknownSwitch(SwitchId),
    #[error("unknown span or link {0}")]
    UnknownSpan(String),
    #[error("unknown host {0}")]
    UnknownHost(String),
    #[error("port {0} out of range")]
    PortOutOfRange(PortRef),
    #[error("port {port} busy ({dir:?})")]
    PortBusy { port: PortRef, dir: Direction },
    #[error("cross-connect needs two distinct ports, got {0}")]
    SamePort(PortRef),
    #[error("switch {0} failed to execute the cross-connect")]
    DeviceFailure(SwitchId),
    #[error("duplicate id {0}")]
    Duplicate(String),
    #[error("span cost must be positive and finite, got {0}")]
    BadCost(f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Which ports currently carry light, by direction.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LightMap {
    pub ingress: BTreeSet<PortRef>,
    pub egress: BTreeSet<PortRef>,
}

#[derive(Clone, Debug, Default)]
pub struct OpticalPlant {
    switches: BTreeMap<SwitchId, Switch>,
    spans: BTreeMap<String, FiberSpan>,
    links: BTreeMap<String, Vec<String>>,
    hosts: BTreeMap<String, Host>,
    port_use: BTreeMap<(PortRef, Direction), String>,
    generation: u64,
}

impl OpticalPlant {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bumped on every mutation that can change light or cross-connects.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn switches(&self) -> impl Iterator<Item = &Switch> {
        self.switches.values()
    }

    pub fn switch(&self, id: &SwitchId) -> Option<&Switch> {
        self.switches.get(id)
    }

    pub fn spans(&self) -> impl Iterator<Item = &FiberSpan> {
        self.spans.values()
    }

    pub fn span(&self, id: &str) -> Option<&FiberSpan> {
        self.spans.get(id)
    }

    pub fn hosts(&self) -> impl Iterator<Item = &Host> {
        self.hosts.values()
    }

    pub fn host(&self, name: &str) -> Option<&Host> {
        self.hosts.get(name)
    }

    pub fn add_switch(&mut self, name: &str, ports: PortId) -> Result<(), DeviceError> {
        let id = SwitchId::from(name);
        if self.switches.contains_key(&id) {
            return Err(DeviceError::Duplicate(name.to_string()));
        }
        self.switches.insert(
            id.clone(),
            Switch {
                id,
                port_count: ports,
                cross_connects: Vec::new(),
                alarms: Vec::new(),
                failed: false,
            },
        );
        Ok(())
    }

    fn check_port(&self, port: &PortRef) -> Result<(), DeviceError> {
        let sw = self
            .switches
            .get(&port.switch)
            .ok_or_else(|| DeviceError::UnknownSwitch(port.switch.clone()))?;
        if port.port == 0 || port.port > sw.port_count {
            return Err(DeviceError::PortOutOfRange(port.clone()));
        }
        Ok(())
    }

    fn claim_port(&mut self, port: &PortRef, dir: Direction, owner: &str) -> Result<(), DeviceError> {
        self.check_port(port)?;
        let key = (port.clone(), dir);
        if self.port_use.contains_key(&key) {
            return Err(DeviceError::PortBusy {
                port: port.clone(),
                dir,
            });
        }
        self.port_use.insert(key, owner.to_string());
        Ok(())
    }

    /// Add one simplex span belonging to `link_id`.
    pub fn add_span(
        &mut self,
        span_id: &str,
        link_id: &str,
        from: PortRef,
        to: PortRef,
        cost: f64,
    ) -> Result<(), DeviceError> {
        if !(cost.is_finite() && cost > 0.0) {
            return Err(DeviceError::BadCost(cost));
        }
        if self.spans.contains_key(span_id) {
            return Err(DeviceError::Duplicate(span_id.to_string()));
        }
        let owner = format!("span {span_id}");
        self.check_port(&from)?;
        self.check_port(&to)?;
        if self.port_use.contains_key(&(from.clone(), Direction::Egress)) {
            return Err(DeviceError::PortBusy {
                port: from,
                dir: Direction::Egress,
            });
        }
        self.claim_port(&to, Direction::Ingress, &owner)?;
        self.claim_port(&from, Direction::Egress, &owner)?;
        self.spans.insert(
            span_id.to_string(),
            FiberSpan {
                span_id: span_id.to_string(),
                link_id: link_id.to_string(),
                from,
                to,
                cost,
                state: SpanState::Lit,
            },
        );
        self.links
            .entry(link_id.to_string())
            .or_default()
            .push(span_id.to_string());
        self.generation += 1;
        Ok(())
    }

    /// A duplex link `id` becomes spans `id.fwd` (a to b) and `id.rev`.
    pub fn add_duplex(&mut self, id: &str, a: PortRef, b: PortRef, cost: f64) -> Result<(), DeviceError> {
        if self.links.contains_key(id) || self.spans.contains_key(id) {
            return Err(DeviceError::Duplicate(id.to_string()));
        }
        self.add_span(&format!("{id}.fwd"), id, a.clone(), b.clone(), cost)?;
        self.add_span(&format!("{id}.rev"), id, b, a, cost)
    }

    pub fn add_host(&mut self, name: &str, attached: PortRef) -> Result<(), DeviceError> {
        if self.hosts.contains_key(name) {
            return Err(DeviceError::Duplicate(name.to_string()));
        }
        let owner = format!("host {name}");
        self.check_port(&attached)?;
        if self.port_use.contains_key(&(attached.clone(), Direction::Egress)) {
            return Err(DeviceError::PortBusy {
                port: attached,
                dir: Direction::Egress,
            });
        }
        self.claim_port(&attached, Direction::Ingress, &owner)?;
        self.claim_port(&attached, Direction::Egress, &owner)?;
        self.hosts.insert(
            name.to_string(),
            Host {
                name: name.to_string(),
                attached,
                transmitting: true,
            },
        );
        self.generation += 1;
        Ok(())
    }

    pub fn set_host_transmitting(&mut self, name: &str, on: bool) -> Result<(), DeviceError> {
        let host = self
            .hosts
            .get_mut(name)
            .ok_or_else(|| DeviceError::UnknownHost(name.to_string()))?;
        host.transmitting = on;
        self.generation += 1;
        Ok(())
    }

    /// Make the switch reject cross-connect commands until cleared.
    pub fn set_switch_failed(&mut self, sw: &SwitchId, failed: bool) -> Result<(), DeviceError> {
        let s = self
            .switches
            .get_mut(sw)
            .ok_or_else(|| DeviceError::UnknownSwitch(sw.clone()))?;
        s.failed = failed;
        Ok(())
    }

    /// Span ids named by `target`: a span id, or every span of a link.
    pub fn resolve_target(&self, target: &str) -> Option<Vec<String>> {
        if self.spans.contains_key(target) {
            Some(vec![target.to_string()])
        } else {
            self.links.get(target).cloned()
        }
    }

    pub fn make_cross_connect(
        &mut self,
        sw: &SwitchId,
        in_port: PortId,
        out_port: PortId,
        owner: Option<&str>,
        now: SimTime,
    ) -> Result<CrossConnect, DeviceError> {
        let result = self.try_cross_connect(sw, in_port, out_port, owner, now);
        if let Err(e) = &result {
            let severity = match e {
                DeviceError::DeviceFailure(_) => Severity::Major,
                _ => Severity::Minor,
            };
            if let Some(s) = self.switches.get_mut(sw) {
                s.alarms.push(AlarmRecord {
                    severity,
                    kind: AlarmKind::XconnFailure,
                    subject: AlarmSubject::Port(PortRef {
                        switch: sw.clone(),
                        port: in_port,
                    }),
                    at: now,
                });
            }
        }
        result
    }

    fn try_cross_connect(
        &mut self,
        sw: &SwitchId,
        in_port: PortId,
        out_port: PortId,
        owner: Option<&str>,
        now: SimTime,
    ) -> Result<CrossConnect, DeviceError> {
        let port = |p| PortRef {
            switch: sw.clone(),
            port: p,
        };
        self.check_port(&port(in_port))?;
        self.check_port(&port(out_port))?;
        if in_port == out_port {
            return Err(DeviceError::SamePort(port(in_port)));
        }
        let s = self.switches.get_mut(sw).expect("checked");
        if s.failed {
            return Err(DeviceError::DeviceFailure(sw.clone()));
        }
        if s.cross_connects.iter().any(|x| x.in_port == in_port) {
            return Err(DeviceError::PortBusy {
                port: port(in_port),
                dir: Direction::Ingress,
            });
        }
        if s.cross_connects.iter().any(|x| x.out_port == out_port) {
            return Err(DeviceError::PortBusy {
                port: port(out_port),
                dir: Direction::Egress,
            });
        }
        let xc = CrossConnect {
            in_port,
            out_port,
            owner_path: owner.map(str::to_string),
            created_at: now,
        };
        s.cross_connects.push(xc.clone());
        self.generation += 1;
        Ok(xc)
    }

    /// Returns `false` when no such cross-connect existed.
    pub fn tear_cross_connect(
        &mut self,
        sw: &SwitchId,
        in_port: PortId,
        out_port: PortId,
    ) -> Result<bool, DeviceError> {
        let s = self
            .switches
            .get_mut(sw)
            .ok_or_else(|| DeviceError::UnknownSwitch(sw.clone()))?;
        let before = s.cross_connects.len();
        s.cross_connects
            .retain(|x| !(x.in_port == in_port && x.out_port == out_port));
        let removed = s.cross_connects.len() != before;
        if removed {
            self.generation += 1;
        }
        Ok(removed)
    }

    /// Every cross-connect with an owning path, across all switches.
    pub fn owned_cross_connects(&self) -> Vec<(SwitchId, CrossConnect)> {
        self.switches
            .values()
            .flat_map(|s| {
                s.cross_connects
                    .iter()
                    .filter(|x| x.owner_path.is_some())
                    .map(move |x| (s.id.clone(), x.clone()))
            })
            .collect()
    }

    pub fn set_span_state(
        &mut self,
        span_id: &str,
        state: SpanState,
        now: SimTime,
    ) -> Result<Vec<LightEvent>, DeviceError> {
        let span = self
            .spans
            .get_mut(span_id)
            .ok_or_else(|| DeviceError::UnknownSpan(span_id.to_string()))?;
        if span.state == state {
            return Ok(Vec::new());
        }
        span.state = state;
        let (from, to) = (span.from.clone(), span.to.clone());
        self.generation += 1;

        let mut endpoints = vec![from, to];
        endpoints.dedup();
        let change = match state {
            SpanState::Cut => LightChange::LossOfLight,
            SpanState::Lit => LightChange::Restored,
        };
        let mut events = Vec::new();
        for port in endpoints {
            let still_cut = self.adjacent_cut(&port);
            let sw = self.switches.get_mut(&port.switch).expect("validated at add");
            match state {
                SpanState::Cut if !sw.has_loss_of_light(&port) => sw.alarms.push(AlarmRecord {
                    severity: Severity::Critical,
                    kind: AlarmKind::LossOfLight,
                    subject: AlarmSubject::Port(port.clone()),
                    at: now,
                }),
                SpanState::Lit if !still_cut => sw.alarms.retain(|a| {
                    !(a.kind == AlarmKind::LossOfLight
                        && a.subject == AlarmSubject::Port(port.clone()))
                }),
                _ => {}
            }
            events.push(LightEvent {
                switch: port.switch.clone(),
                span_id: span_id.to_string(),
                port: port.port,
                change,
            });
        }
        Ok(events)
    }

    fn adjacent_cut(&self, port: &PortRef) -> bool {
        [Direction::Ingress, Direction::Egress].iter().any(|d| {
            self.port_use
                .get(&(port.clone(), *d))
                .and_then(|owner| owner.strip_prefix("span "))
                .and_then(|id| self.spans.get(id))
                .is_some_and(|s| s.state == SpanState::Cut)
        })
    }

    /// Propagate light from transmitting hosts through cross-connects and
    /// lit spans.
    pub fn light_map(&self) -> LightMap {
        let mut map = LightMap::default();
        let mut queue: VecDeque<PortRef> = self
            .hosts
            .values()
            .filter(|h| h.transmitting)
            .map(|h| h.attached.clone())
            .collect();
        for p in &queue {
            map.ingress.insert(p.clone());
        }
        while let Some(rx) = queue.pop_front() {
            let Some(sw) = self.switches.get(&rx.switch) else {
                continue;
            };
            for xc in sw.cross_connects.iter().filter(|x| x.in_port == rx.port) {
                let tx = PortRef {
                    switch: rx.switch.clone(),
                    port: xc.out_port,
                };
                if !map.egress.insert(tx.clone()) {
                    continue;
                }
                let next = self
                    .port_use
                    .get(&(tx, Direction::Egress))
                    .and_then(|o| o.strip_prefix("span "))
                    .and_then(|id| self.spans.get(id))
                    .filter(|s| s.state == SpanState::Lit);
                if let Some(span) = next {
                    if map.ingress.insert(span.to.clone()) {
                        queue.push_back(span.to.clone());
                    }
                }
            }
        }
        map
    }

    fn port_lit(&self, map: &LightMap, port: &PortRef) -> bool {
        (map.ingress.contains(port) || map.egress.contains(port)) && !self.adjacent_cut(port)
    }

    pub fn port_has_light(&self, port: &PortRef) -> bool {
        self.port_lit(&self.light_map(), port)
    }

    /// Whether light reaches the host from the switch.
    pub fn host_receives_light(&self, name: &str) -> bool {
        self.host_receives_light_in(&self.light_map(), name)
    }

    pub fn host_receives_light_in(&self, map: &LightMap, name: &str) -> bool {
        self.hosts
            .get(name)
            .is_some_and(|h| map.egress.contains(&h.attached) && !self.adjacent_cut(&h.attached))
    }

    pub fn read_monitor(&self, sw: &SwitchId, now: SimTime) -> Result<MonitorSnapshot, DeviceError> {
        let s = self
            .switches
            .get(sw)
            .ok_or_else(|| DeviceError::UnknownSwitch(sw.clone()))?;
        let map = self.light_map();
        let readings = (1..=s.port_count)
            .map(|p| {
                let port = PortRef {
                    switch: sw.clone(),
                    port: p,
                };
                let power = if self.port_lit(&map, &port) { LIT_DBM } else { DARK_DBM };
                PortReading {
                    port,
                    power_dbm: power,
                    light_present: power >= LOSS_OF_LIGHT_THRESHOLD_DBM,
                    at: now,
                }
            })
            .collect();
        Ok(MonitorSnapshot {
            switch: sw.clone(),
            at: now,
            readings,
            cross_connects: s.cross_connects.clone(),
            alarms: s.alarms.clone(),
        })
    }

    /// Parse the line-oriented topology format:
    ///
    /// ```text
    /// switch <name> ports <n>
    /// span <id> <sw>:<port> -> <sw>:<port> [cost <c>]
    /// span <id> <sw>:<port> <-> <sw>:<port> [cost <c>]
    /// host <name> attached <sw>:<port>
    /// ```
    pub fn parse(text: &str) -> Result<OpticalPlant, DeviceError> {
        let mut plant = OpticalPlant::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |message: String| DeviceError::Parse { line, message };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let toks: Vec<&str> = content.split_whitespace().collect();
            let located = |e: DeviceError| match e {
                DeviceError::Parse { .. } => e,
                other => err(other.to_string()),
            };
            match toks.as_slice() {
                ["switch", name, "ports", n] => {
                    let n: PortId = n.parse().map_err(|_| err(format!("bad port count {n}")))?;
                    if n == 0 {
                        return Err(err("switch needs at least one port".into()));
                    }
                    plant.add_switch(name, n).map_err(located)?;
                }
                ["span", id, a, arrow, b, rest @ ..] => {
                    let a = parse_port(a).map_err(err)?;
                    let b = parse_port(b).map_err(err)?;
                    let cost = match rest {
                        [] => DEFAULT_SPAN_COST,
                        ["cost", c] => c.parse().map_err(|_| err(format!("bad cost {c}")))?,
                        _ => return Err(err(format!("unexpected tokens {rest:?}"))),
                    };
                    match *arrow {
                        "->" => plant.add_span(id, id, a, b, cost).map_err(located)?,
                        "<->" => plant.add_duplex(id, a, b, cost).map_err(located)?,
                        other => return Err(err(format!("expected -> or <->, got {other}"))),
                    }
                }
                ["host", name, "attached", at] => {
                    let at = parse_port(at).map_err(err)?;
                    plant.add_host(name, at).map_err(located)?;
                }
                _ => return Err(err(format!("unknown directive: {content}"))),
            }
        }
        Ok(plant)
    }
}

fn parse_port(tok: &str) -> Result<PortRef, String> {
    let (sw, port) = tok
        .rsplit_once(':')
        .ok_or_else(|| format!("expected <switch>:<port>, got {tok}"))?;
    let port: PortId = port.parse().map_err(|_| format!("bad port in {tok}"))?;
    Ok(PortRef::new(sw, port))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = "
        switch a ports 4
        switch b ports 4
        span ab a:2 <-> b:1 cost 3
        host src attached a:1
        host dst attached b:2
    ";

    fn two() -> OpticalPlant {
        OpticalPlant::parse(TWO).unwrap()
    }

    fn sw(s: &str) -> SwitchId {
        SwitchId::from(s)
    }

    /// Independent reachability walk over (port, direction) nodes.
    fn walk_lit(plant: &OpticalPlant) -> BTreeSet<PortRef> {
        let mut lit = BTreeSet::new();
        let mut frontier: Vec<PortRef> = plant
            .hosts()
            .filter(|h| h.transmitting)
            .map(|h| h.attached.clone())
            .collect();
        let mut seen = BTreeSet::new();
        while let Some(p) = frontier.pop() {
            if !seen.insert(p.clone()) {
                continue;
            }
            lit.insert(p.clone());
            let s = plant.switch(&p.switch).unwrap();
            for x in s.cross_connects() {
                if x.in_port == p.port {
                    let out = PortRef::new(p.switch.as_str(), x.out_port);
                    lit.insert(out.clone());
                    for span in plant.spans() {
                        if span.from == out && span.state == SpanState::Lit {
                            frontier.push(span.to.clone());
                        }
                    }
                }
            }
        }
        lit.into_iter()
            .filter(|p| {
                !plant
                    .spans()
                    .any(|s| s.state == SpanState::Cut && (&s.from == p || &s.to == p))
            })
            .collect()
    }

    #[test]
    fn parse_expands_duplex() {
        let p = two();
        assert_eq!(p.spans().count(), 2);
        assert_eq!(p.span("ab.fwd").unwrap().from, PortRef::new("a", 2));
        assert_eq!(p.span("ab.rev").unwrap().to, PortRef::new("a", 2));
        assert_eq!(p.resolve_target("ab").unwrap().len(), 2);
        assert_eq!(p.resolve_target("ab.rev").unwrap(), vec!["ab.rev".to_string()]);
        assert!(p.resolve_target("zz").is_none());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = OpticalPlant::parse("switch a ports 2\nspan x a:1 -> a:9\n").unwrap_err();
        assert!(matches!(e, DeviceError::Parse { line: 2, .. }), "{e:?}");
        let e = OpticalPlant::parse("\n\nbogus line\n").unwrap_err();
        assert!(matches!(e, DeviceError::Parse { line: 3, .. }));
        let e = OpticalPlant::parse("switch a ports 2\nswitch b ports 2\nspan x a:1 -> b:1 cost 0\n")
            .unwrap_err();
        assert!(matches!(e, DeviceError::Parse { line: 3, .. }));
    }

    #[test]
    fn default_cost_is_one() {
        let p = OpticalPlant::parse("switch a ports 2\nswitch b ports 2\nspan x a:1 -> b:1").unwrap();
        assert_eq!(p.span("x").unwrap().cost, 1.0);
    }

    #[test]
    fn cross_connect_lifecycle() {
        let mut p = OpticalPlant::parse("switch s ports 8").unwrap();
        let xc = p.make_cross_connect(&sw("s"), 3, 7, Some("p/1"), SimTime(1)).unwrap();
        assert_eq!((xc.in_port, xc.out_port), (3, 7));
        let snap = p.read_monitor(&sw("s"), SimTime(2)).unwrap();
        assert_eq!(snap.cross_connects, vec![xc]);
        assert!(matches!(
            p.make_cross_connect(&sw("s"), 3, 5, None, SimTime(3)),
            Err(DeviceError::PortBusy { dir: Direction::Ingress, .. })
        ));
        assert!(matches!(
            p.make_cross_connect(&sw("s"), 4, 7, None, SimTime(3)),
            Err(DeviceError::PortBusy { dir: Direction::Egress, .. })
        ));
        // port 7 may still be the input of another connect
        p.make_cross_connect(&sw("s"), 7, 3, None, SimTime(3)).unwrap();
        assert!(p.tear_cross_connect(&sw("s"), 3, 7).unwrap());
        assert!(!p.tear_cross_connect(&sw("s"), 3, 7).unwrap());
        assert_eq!(p.switch(&sw("s")).unwrap().cross_connects().len(), 1);
    }

    #[test]
    fn failed_switch_rejects_and_alarms() {
        let mut p = OpticalPlant::parse("switch s ports 4").unwrap();
        p.set_switch_failed(&sw("s"), true).unwrap();
        assert_eq!(
            p.make_cross_connect(&sw("s"), 1, 2, None, SimTime(0)),
            Err(DeviceError::DeviceFailure(sw("s")))
        );
        let alarms = p.switch(&sw("s")).unwrap().alarms();
        assert_eq!(alarms[0].kind, AlarmKind::XconnFailure);
    }

    #[test]
    fn light_follows_cross_connects() {
        let mut p = two();
        let snap = p.read_monitor(&sw("b"), SimTime(0)).unwrap();
        assert!(!snap.reading(1).unwrap().light_present);

        p.make_cross_connect(&sw("a"), 1, 2, Some("x"), SimTime(0)).unwrap();
        p.make_cross_connect(&sw("b"), 1, 2, Some("x"), SimTime(0)).unwrap();
        let a = p.read_monitor(&sw("a"), SimTime(0)).unwrap();
        let b = p.read_monitor(&sw("b"), SimTime(0)).unwrap();
        assert!(a.reading(2).unwrap().light_present);
        assert!(b.reading(1).unwrap().light_present);
        assert_eq!(b.reading(1).unwrap().power_dbm, LIT_DBM);
        assert!(p.host_receives_light("dst"));
        assert_eq!(walk_lit(&p).len(), 4);
    }

    #[test]
    fn dark_input_gives_dark_output() {
        let mut p = two();
        p.set_host_transmitting("src", false).unwrap();
        p.make_cross_connect(&sw("a"), 1, 2, None, SimTime(0)).unwrap();
        p.make_cross_connect(&sw("b"), 1, 2, None, SimTime(0)).unwrap();
        let b = p.read_monitor(&sw("b"), SimTime(0)).unwrap();
        assert!(!b.reading(1).unwrap().light_present);
        assert!(!p.host_receives_light("dst"));
        // only the other host's own port carries light
        let lit = walk_lit(&p);
        assert_eq!(lit.len(), 1);
        assert!(lit.contains(&p.host("dst").unwrap().attached));
    }

    #[test]
    fn tearing_mid_path_darkens_downstream() {
        let mut p = OpticalPlant::parse(
            "switch a ports 3\nswitch b ports 3\nswitch c ports 3
             span ab a:2 -> b:1\nspan bc b:2 -> c:1
             host h attached a:1\nhost g attached c:2",
        )
        .unwrap();
        for s in ["a", "b", "c"] {
            p.make_cross_connect(&sw(s), 1, 2, Some("p"), SimTime(0)).unwrap();
        }
        assert!(p.host_receives_light("g"));
        p.tear_cross_connect(&sw("b"), 1, 2).unwrap();
        let oracle = walk_lit(&p);
        assert!(!oracle.contains(&PortRef::new("c", 1)));
        assert!(!p.port_has_light(&PortRef::new("c", 1)));
        assert!(p.port_has_light(&PortRef::new("b", 1)));
        assert!(!p.host_receives_light("g"));
    }

    #[test]
    fn cut_raises_one_alarm_per_endpoint_and_restore_clears() {
        let mut p = two();
        p.make_cross_connect(&sw("a"), 1, 2, Some("x"), SimTime(0)).unwrap();
        let ev = p.set_span_state("ab.fwd", SpanState::Cut, SimTime(5000)).unwrap();
        assert_eq!(ev.len(), 2);
        assert!(ev.iter().all(|e| e.change == LightChange::LossOfLight));
        for (s, port) in [("a", 2), ("b", 1)] {
            let snap = p.read_monitor(&sw(s), SimTime(5000)).unwrap();
            assert!(!snap.reading(port).unwrap().light_present);
            assert_eq!(snap.alarms.len(), 1);
        }
        // cutting the reverse direction shares endpoints: no second alarm
        p.set_span_state("ab.rev", SpanState::Cut, SimTime(5001)).unwrap();
        assert!(p.set_span_state("ab.fwd", SpanState::Cut, SimTime(5002)).unwrap().is_empty());
        assert_eq!(p.read_monitor(&sw("a"), SimTime(0)).unwrap().alarms.len(), 1);

        p.set_span_state("ab.fwd", SpanState::Lit, SimTime(6000)).unwrap();
        // reverse still cut: alarm persists
        assert_eq!(p.read_monitor(&sw("a"), SimTime(0)).unwrap().alarms.len(), 1);
        p.set_span_state("ab.rev", SpanState::Lit, SimTime(6001)).unwrap();
        assert!(p.read_monitor(&sw("a"), SimTime(0)).unwrap().alarms.is_empty());
        assert!(p.port_has_light(&PortRef::new("a", 2)));
    }

    #[test]
    fn unknown_span_rejected() {
        let mut p = two();
        assert!(matches!(
            p.set_span_state("nope", SpanState::Cut, SimTime(0)),
            Err(DeviceError::UnknownSpan(_))
        ));
    }

    #[test]
    fn host_ports_cannot_carry_spans() {
        let mut p = two();
        assert!(p
            .add_span("z", "z", PortRef::new("a", 1), PortRef::new("b", 3), 1.0)
            .is_err());
    }

    #[test]
    fn alarm_list_only_shrinks_on_restore() {
        let mut p = two();
        let mut last = 0;
        let steps: [(&str, SpanState); 6] = [
            ("ab.fwd", SpanState::Cut),
            ("ab.rev", SpanState::Cut),
            ("ab.fwd", SpanState::Cut),
            ("ab.rev", SpanState::Lit),
            ("ab.fwd", SpanState::Lit),
            ("ab.fwd", SpanState::Cut),
        ];
        for (i, (span, st)) in steps.into_iter().enumerate() {
            p.set_span_state(span, st, SimTime(i as u64)).unwrap();
            let n = p.read_monitor(&sw("b"), SimTime(0)).unwrap().alarms.len();
            if st == SpanState::Cut {
                assert!(n >= last);
            }
            last = n;
        }
    }
}
